//! Exact projections, support functions and Hausdorff distances for the
//! analytic shapes.

use super::BodySpec;
use crate::error::{check_dim, Error, Result};
use crate::numerics::linalg::{axpy, dist, dot, norm2, sub};
use crate::numerics::Matrix;

const MAX_FACETS: usize = 8;

/// Euclidean projection onto a ball, box, Δ_ξ, a polytope with at most eight
/// facets, and shifts, products and outer parallel bodies of those.
pub fn exact_project(body: &BodySpec, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(body.dim(), x.len())?;
    match body {
        BodySpec::Ball { center, radius } => {
            let diff = sub(x, center);
            let n = norm2(&diff);
            if n <= *radius {
                Ok(x.to_vec())
            } else {
                Ok(axpy(center, radius / n, &diff))
            }
        }
        BodySpec::Box { lo, hi } => Ok(x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()),
        BodySpec::SimplexXi { dim, xi } => Ok(project_simplex(x, *xi, 1.0 - *dim as f64 * xi)),
        BodySpec::Polytope { a, b } => {
            if a.rows > MAX_FACETS {
                return Err(Error::UnsupportedBody("exact_project on a polytope with more than 8 facets"));
            }
            project_polytope(a, b, x)
        }
        BodySpec::Scaled { base, factor, offset } => {
            let local: Vec<f64> = x.iter().zip(offset).map(|(a, b)| (a - b) / factor).collect();
            Ok(exact_project(base, &local)?.iter().zip(offset).map(|(a, b)| factor * a + b).collect())
        }
        BodySpec::Shifted { base, offset } => {
            let y = exact_project(base, &sub(x, offset))?;
            Ok(y.iter().zip(offset).map(|(a, b)| a + b).collect())
        }
        BodySpec::Product(parts) => {
            let mut out = Vec::with_capacity(x.len());
            let mut off = 0;
            for p in parts {
                let k = p.dim();
                out.extend(exact_project(p, &x[off..off + k])?);
                off += k;
            }
            Ok(out)
        }
        BodySpec::Parallel { base, eps } if *eps >= 0.0 => {
            let y = exact_project(base, x)?;
            let diff = sub(x, &y);
            let n = norm2(&diff);
            if n <= *eps {
                Ok(x.to_vec())
            } else {
                Ok(axpy(&y, eps / n, &diff))
            }
        }
        _ => Err(Error::UnsupportedBody("exact_project")),
    }
}

/// Projection onto `{p ≥ ξ, Σ p = 1}` via the sorting algorithm on the
/// shifted simplex `{q ≥ 0, Σ q = mass}`.
fn project_simplex(x: &[f64], xi: f64, mass: f64) -> Vec<f64> {
    let y: Vec<f64> = x.iter().map(|v| v - xi).collect();
    let mut u = y.clone();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - mass) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0) + xi).collect()
}

fn feasible(a: &Matrix, b: &[f64], y: &[f64], tol: f64) -> bool {
    (0..a.rows).all(|i| dot(a.row(i), y) <= b[i] + tol * (1.0 + b[i].abs()))
}

/// Active-set enumeration: among all facet subsets whose equality-constrained
/// projection is feasible with nonnegative multipliers, the KKT point is the
/// projection. Falls back to the nearest feasible candidate on degeneracy.
fn project_polytope(a: &Matrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let d = x.len();
    if feasible(a, b, x, 1e-12) {
        return Ok(x.to_vec());
    }
    let m = a.rows;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > d {
            continue;
        }
        let k = rows.len();
        let mut gram = Matrix::zeros(k, k);
        let mut rhs = vec![0.0; k];
        for (p, &i) in rows.iter().enumerate() {
            for (q, &j) in rows.iter().enumerate() {
                gram[(p, q)] = dot(a.row(i), a.row(j));
            }
            rhs[p] = dot(a.row(i), x) - b[i];
        }
        let Some(lambda) = gram.solve(&rhs) else { continue };
        let mut y = x.to_vec();
        for (p, &i) in rows.iter().enumerate() {
            for j in 0..d {
                y[j] -= lambda[p] * a.row(i)[j];
            }
        }
        if !feasible(a, b, &y, 1e-9) {
            continue;
        }
        if lambda.iter().all(|l| *l >= -1e-12) {
            return Ok(y);
        }
        let dy = dist(&y, x);
        if best.as_ref().is_none_or(|(bd, _)| dy < *bd) {
            best = Some((dy, y));
        }
    }
    best.map(|(_, y)| y).ok_or_else(|| Error::InvalidInput("empty polytope".into()))
}

/// Vertices of a polytope (at most eight facets) by enumerating
/// `d`-subsets of facets.
fn polytope_vertices(a: &Matrix, b: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = a.cols;
    let m = a.rows;
    if m > MAX_FACETS {
        return Err(Error::UnsupportedBody("vertex enumeration beyond 8 facets"));
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mask in 1u32..(1 << m) {
        if mask.count_ones() as usize != d {
            continue;
        }
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let sub_a = Matrix::from_rows(&rows.iter().map(|&i| a.row(i).to_vec()).collect::<Vec<_>>());
        let sub_b: Vec<f64> = rows.iter().map(|&i| b[i]).collect();
        if let Some(v) = sub_a.solve(&sub_b) {
            if feasible(a, b, &v, 1e-9) && !out.iter().any(|w| dist(w, &v) < 1e-12) {
                out.push(v);
            }
        }
    }
    Ok(out)
}

fn vertices(body: &BodySpec) -> Option<Result<Vec<Vec<f64>>>> {
    match body {
        BodySpec::Box { lo, hi } => {
            let d = lo.len();
            Some(Ok((0..1usize << d)
                .map(|mask| (0..d).map(|j| if mask & (1 << j) != 0 { hi[j] } else { lo[j] }).collect())
                .collect()))
        }
        BodySpec::Polytope { a, b } => Some(polytope_vertices(a, b)),
        BodySpec::SimplexXi { dim, xi } => {
            let mass = 1.0 - *dim as f64 * xi;
            Some(Ok((0..*dim)
                .map(|k| (0..*dim).map(|j| if j == k { xi + mass } else { *xi }).collect())
                .collect()))
        }
        BodySpec::Shifted { base, offset } => vertices(base)
            .map(|r| r.map(|vs| vs.into_iter().map(|v| v.iter().zip(offset).map(|(a, b)| a + b).collect()).collect())),
        BodySpec::Scaled { base, factor, offset } => vertices(base).map(|r| {
            r.map(|vs| vs.into_iter().map(|v| v.iter().zip(offset).map(|(a, b)| factor * a + b).collect()).collect())
        }),
        _ => None,
    }
}

/// Support function `h(u) = max_{x ∈ body} ⟨u, x⟩`.
pub fn support(body: &BodySpec, u: &[f64]) -> Result<f64> {
    check_dim(body.dim(), u.len())?;
    match body {
        BodySpec::Ball { center, radius } => Ok(dot(u, center) + radius * norm2(u)),
        BodySpec::Box { lo, hi } => Ok(u.iter().zip(lo.iter().zip(hi)).map(|(c, (l, h))| (c * l).max(c * h)).sum()),
        BodySpec::Parallel { base, eps } if *eps >= 0.0 => Ok(support(base, u)? + eps * norm2(u)),
        BodySpec::Product(parts) => {
            let mut off = 0;
            let mut s = 0.0;
            for p in parts {
                let k = p.dim();
                s += support(p, &u[off..off + k])?;
                off += k;
            }
            Ok(s)
        }
        BodySpec::MinkowskiSum(parts) => parts.iter().map(|p| support(&p.body, u)).sum(),
        BodySpec::Scaled { base, factor, offset } => Ok(factor * support(base, u)? + dot(u, offset)),
        _ => match vertices(body) {
            Some(vs) => Ok(vs?.iter().map(|v| dot(u, v)).fold(f64::NEG_INFINITY, f64::max)),
            None => Err(Error::UnsupportedBody("support function")),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hausdorff {
    pub value: f64,
    /// False when the value is a support-function sample estimate.
    pub exact: bool,
}

/// Hausdorff distance. Exact for ball pairs and for pairs of polytopal shapes
/// (boxes, polytopes, Δ_ξ), where the directed distance is maximised at a
/// vertex. Otherwise `sup_u |h_a(u) − h_b(u)|` over `n_dirs` deterministic
/// unit directions, flagged as an estimate.
pub fn hausdorff_distance(a: &BodySpec, b: &BodySpec, n_dirs: usize) -> Result<Hausdorff> {
    check_dim(a.dim(), b.dim())?;
    if let (BodySpec::Ball { center: c1, radius: r1 }, BodySpec::Ball { center: c2, radius: r2 }) = (a, b) {
        return Ok(Hausdorff { value: dist(c1, c2) + (r1 - r2).abs(), exact: true });
    }
    if let (Some(va), Some(vb)) = (vertices(a), vertices(b)) {
        let (va, vb) = (va?, vb?);
        let mut h: f64 = 0.0;
        for v in &va {
            h = h.max(dist(v, &exact_project(b, v)?));
        }
        for v in &vb {
            h = h.max(dist(v, &exact_project(a, v)?));
        }
        return Ok(Hausdorff { value: h, exact: true });
    }
    let d = a.dim();
    let mut h: f64 = 0.0;
    for u in sphere_directions(d, n_dirs.max(1)) {
        h = h.max((support(a, &u)? - support(b, &u)?).abs());
    }
    Ok(Hausdorff { value: h, exact: false })
}

/// Deterministic unit directions: the ± coordinate axes plus an even circle
/// grid in 2-D, or normalised low-discrepancy points of `[−1, 1]^d` in
/// higher dimension.
fn sphere_directions(d: usize, n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for j in 0..d {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[j] = s;
            out.push(v);
        }
    }
    if d == 1 {
        return out;
    }
    if d == 2 {
        for i in 0..n {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            out.push(vec![t.cos(), t.sin()]);
        }
        return out;
    }
    let golden = 0.5 * (1.0 + 5f64.sqrt());
    for i in 0..n {
        let mut v: Vec<f64> = (0..d)
            .map(|j| {
                let t = ((i as f64 + 0.5) * golden.powi(j as i32 + 1)).fract();
                2.0 * t - 1.0
            })
            .collect();
        let nv = norm2(&v);
        if nv > 1e-9 {
            v.iter_mut().for_each(|c| *c /= nv);
            out.push(v);
        }
    }
    out
}

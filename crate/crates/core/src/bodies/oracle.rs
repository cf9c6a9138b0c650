//! Margin-shifted separation for every body variant.
//!
//! `sep_margin(body, z, m)` answers for the parallel body `B̄(body, m)`. It is
//! exact for balls, boxes, and (for `m ≤ 0`) polytopes and their products and
//! intersections. Elsewhere it answers for a superset (`m > 0`) or subset
//! (`m < 0`) assembled from per-constraint shifts, which is what the weak
//! oracle contract permits.

use super::{BodySpec, ConvexFn, Hyperplane, SeparationResult, WellBounded, FEAS_TOL};
use crate::ellipsoid::{self, Bounds, OptimizeResult};
use crate::error::{check_dim, Error, Result};
use crate::numerics::linalg::{dot, norm2, sub};

fn separated(z: &[f64], raw: &[f64]) -> Result<SeparationResult> {
    Hyperplane::through(z, raw).map(SeparationResult::Separated).ok_or(Error::GradientDegenerate)
}

fn unit(d: usize, j: usize, sign: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[j] = sign;
    v
}

pub(crate) fn sep_margin(body: &BodySpec, z: &[f64], m: f64, strong: bool) -> Result<SeparationResult> {
    check_dim(body.dim(), z.len())?;
    match body {
        BodySpec::Ball { center, radius } => {
            let diff = sub(z, center);
            let r = radius + m;
            let dn = norm2(&diff);
            if r >= 0.0 && dn <= r + FEAS_TOL * (1.0 + r) {
                return Ok(SeparationResult::Inside);
            }
            if dn == 0.0 {
                return separated(z, &unit(z.len(), 0, 1.0));
            }
            separated(z, &diff)
        }
        BodySpec::Box { lo, hi } => {
            if m >= 0.0 {
                let y: Vec<f64> = z.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect();
                let diff = sub(z, &y);
                if norm2(&diff) <= m + FEAS_TOL {
                    return Ok(SeparationResult::Inside);
                }
                return separated(z, &diff);
            }
            let mut worst = (0.0, 0usize, 1.0);
            for j in 0..z.len() {
                let (l, h) = (lo[j] - m, hi[j] + m);
                if l > h {
                    let sign = if z[j] >= 0.5 * (lo[j] + hi[j]) { 1.0 } else { -1.0 };
                    return separated(z, &unit(z.len(), j, sign));
                }
                if z[j] - h > worst.0 {
                    worst = (z[j] - h, j, 1.0);
                }
                if l - z[j] > worst.0 {
                    worst = (l - z[j], j, -1.0);
                }
            }
            if worst.0 <= FEAS_TOL {
                Ok(SeparationResult::Inside)
            } else {
                separated(z, &unit(z.len(), worst.1, worst.2))
            }
        }
        BodySpec::Polytope { a, b } => {
            let mut worst: Option<(f64, usize)> = None;
            for i in 0..a.rows {
                let row = a.row(i);
                let v = (dot(row, z) - b[i]) / norm2(row) - m;
                if v > FEAS_TOL * (1.0 + b[i].abs()) && worst.is_none_or(|(w, _)| v > w) {
                    worst = Some((v, i));
                }
            }
            match worst {
                None => Ok(SeparationResult::Inside),
                Some((_, i)) => separated(z, a.row(i)),
            }
        }
        BodySpec::SimplexXi { dim, xi } => {
            let d = *dim;
            let tol = FEAS_TOL * d as f64;
            let mut worst: Option<(f64, Vec<f64>)> = None;
            for j in 0..d {
                let v = (xi - z[j]) - m;
                if v > tol && worst.as_ref().is_none_or(|(w, _)| v > *w) {
                    worst = Some((v, unit(d, j, -1.0)));
                }
            }
            let sum: f64 = z.iter().sum();
            let v = (sum - 1.0).abs() / (d as f64).sqrt() - m.max(0.0);
            if v > tol && worst.as_ref().is_none_or(|(w, _)| v > *w) {
                worst = Some((v, vec![(sum - 1.0).signum(); d]));
            }
            match worst {
                None => Ok(SeparationResult::Inside),
                Some((_, n)) => separated(z, &n),
            }
        }
        BodySpec::Intersection(parts) => {
            for p in parts {
                if let s @ SeparationResult::Separated(_) = sep_margin(p, z, m, strong)? {
                    return Ok(s);
                }
            }
            Ok(SeparationResult::Inside)
        }
        BodySpec::Product(parts) => {
            let mut off = 0;
            for p in parts {
                let k = p.dim();
                if let SeparationResult::Separated(h) = sep_margin(p, &z[off..off + k], m, strong)? {
                    let mut n = vec![0.0; z.len()];
                    n[off..off + k].copy_from_slice(&h.normal);
                    return Ok(SeparationResult::Separated(Hyperplane { normal: n, anchor: z.to_vec() }));
                }
                off += k;
            }
            Ok(SeparationResult::Inside)
        }
        BodySpec::MinkowskiSum(parts) => minkowski_margin(parts, z, m.max(0.0), strong),
        BodySpec::LevelSet { f, threshold } => level_set_margin(f, *threshold, z, m),
        BodySpec::Scaled { base, factor, offset } => {
            let local: Vec<f64> = z.iter().zip(offset).map(|(a, b)| (a - b) / factor).collect();
            Ok(match sep_margin(base, &local, m / factor, strong)? {
                SeparationResult::Inside => SeparationResult::Inside,
                SeparationResult::Separated(h) => SeparationResult::Separated(Hyperplane { normal: h.normal, anchor: z.to_vec() }),
            })
        }
        BodySpec::Shifted { base, offset } => {
            let local = sub(z, offset);
            Ok(match sep_margin(base, &local, m, strong)? {
                SeparationResult::Inside => SeparationResult::Inside,
                SeparationResult::Separated(h) => SeparationResult::Separated(Hyperplane { normal: h.normal, anchor: z.to_vec() }),
            })
        }
        BodySpec::WeakOnly { circuit } => {
            if strong {
                return Err(Error::UnsupportedBody("strong_sep on a circuit-encoded body"));
            }
            let mut input = z.to_vec();
            input.push(m.max(FEAS_TOL));
            let out = circuit.eval(&input)?;
            if out[0] > 0.5 {
                Ok(SeparationResult::Inside)
            } else {
                separated(z, &out[1..])
            }
        }
        BodySpec::Parallel { base, eps } => sep_margin(base, z, m + eps, strong),
    }
}

fn level_set_margin(f: &ConvexFn, threshold: f64, z: &[f64], m: f64) -> Result<SeparationResult> {
    check_dim(f.dim(), z.len())?;
    let (v, g) = f.value_grad(z);
    if !v.is_finite() {
        return Err(Error::InvalidInput("level-set function returned a non-finite value".into()));
    }
    let gn = norm2(&g);
    if v <= threshold + m * gn + FEAS_TOL * (1.0 + threshold.abs()) {
        return Ok(SeparationResult::Inside);
    }
    separated(z, &g)
}

/// Level-set oracle for `{z : f(z) ≤ γ′}` with the subgradient cut.
pub fn level_set_sep(f: &ConvexFn, threshold: f64, z: &[f64]) -> Result<SeparationResult> {
    level_set_margin(f, threshold, z, 0.0)
}

/// Minkowski-sum oracle: computes the distance from `s` to `Σ parts` by
/// minimising `½‖Σ x_i − s‖²` over the product of the parts, then answers
/// Inside iff that distance is within `δ`. Otherwise the normal is
/// `s − Σ x_i`.
pub fn minkowski_sum_sep(parts: &[WellBounded], s: &[f64], delta: f64) -> Result<SeparationResult> {
    minkowski_margin(parts, s, delta, false)
}

fn minkowski_margin(parts: &[WellBounded], s: &[f64], m: f64, strong: bool) -> Result<SeparationResult> {
    let d = s.len();
    for p in parts {
        check_dim(d, p.body.dim())?;
    }
    let k = parts.len();
    let product = BodySpec::Product(parts.iter().map(|p| p.body.clone()).collect());
    let mut center = Vec::with_capacity(k * d);
    let mut r2 = 0.0;
    for p in parts {
        center.extend(p.outer_center());
        r2 += p.big_r * p.big_r;
    }
    let bounds = Bounds { center, radius: r2.sqrt() };
    let scale = parts.iter().map(|p| p.big_r).fold(1.0, f64::max);
    // Accuracy of the inner problem in ½‖·‖² units.
    let inner = if strong || m <= 0.0 { 1e-14 * scale * scale } else { (0.05 * m).powi(2) };
    let eta = parts.iter().map(|p| p.r).fold(f64::INFINITY, f64::min).min(1.0) * 1e-3;
    let objective = |x: &[f64]| {
        let mut y = vec![0.0; d];
        for i in 0..k {
            for j in 0..d {
                y[j] += x[i * d + j];
            }
        }
        let r = sub(&y, s);
        let mut g = Vec::with_capacity(k * d);
        for _ in 0..k {
            g.extend_from_slice(&r);
        }
        (0.5 * dot(&r, &r), g)
    };
    let res = if strong {
        ellipsoid::scco(&objective, &|x: &[f64]| product.strong_sep(x), &bounds, eta, inner)?
    } else {
        let pd = (inner * 1e-2).sqrt().min(m.max(1e-9) * 1e-2);
        ellipsoid::wcco(&objective, &|x: &[f64]| product.weak_sep(x, pd), &bounds, eta, inner)?
    };
    match res {
        OptimizeResult::Empty { .. } => separated(s, &unit(d, 0, 1.0)),
        OptimizeResult::Minimizer { z, value } => {
            if 2.0 * value <= m * m + 2.0 * inner {
                return Ok(SeparationResult::Inside);
            }
            let mut y = vec![0.0; d];
            for i in 0..k {
                for j in 0..d {
                    y[j] += z[i * d + j];
                }
            }
            separated(s, &sub(s, &y))
        }
    }
}

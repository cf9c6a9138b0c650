//! Kuhn triangulation of the grid `[N]^d`, Sperner colorings and the
//! panchromatic-simplex search.

use crate::{Error, Result};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// `N = 2^ell` points per axis; vertex `v` sits at `v / (N − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub d: usize,
    pub ell: u32,
}

impl GridSpec {
    pub fn new(d: usize, ell: u32) -> Result<Self> {
        if d == 0 || ell == 0 || ell > 30 {
            return Err(Error::InvalidInput(format!("grid needs d ≥ 1 and 1 ≤ ℓ ≤ 30, got d={d}, ℓ={ell}")));
        }
        Ok(GridSpec { d, ell })
    }

    pub fn n(&self) -> usize {
        1usize << self.ell
    }

    pub fn coord(&self, v: &[usize]) -> Vec<f64> {
        let m = (self.n() - 1) as f64;
        v.iter().map(|&k| k as f64 / m).collect()
    }

    /// Longest edge of a Kuhn simplex in `[0,1]^d` coordinates, `√d/(N − 1)`.
    pub fn mesh(&self) -> f64 {
        (self.d as f64).sqrt() / (self.n() - 1) as f64
    }

    pub fn num_cubelets(&self) -> f64 {
        ((self.n() - 1) as f64).powi(self.d as i32)
    }
}

/// Simplex `base, base + e_{π(1)}, base + e_{π(1)} + e_{π(2)}, …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KuhnSimplex {
    pub base: Vec<usize>,
    pub perm: Vec<usize>,
}

impl KuhnSimplex {
    pub fn vertices(&self) -> Vec<Vec<usize>> {
        let mut v = self.base.clone();
        let mut out = Vec::with_capacity(v.len() + 1);
        out.push(v.clone());
        for &k in &self.perm {
            v[k] += 1;
            out.push(v.clone());
        }
        out
    }

    /// Barycentric membership test for a point given in cubelet-local
    /// coordinates `t ∈ [0,1]^d`: the simplex is `{t : t_{π(1)} ≥ … ≥ t_{π(d)}}`.
    pub fn contains_local(&self, t: &[f64], tol: f64) -> bool {
        self.perm.windows(2).all(|w| t[w[0]] + tol >= t[w[1]])
    }
}

/// All permutations of `0..d` in lexicographic order.
pub fn permutations(d: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..d).collect();
    let mut out = vec![p.clone()];
    while let Some(i) = (1..d).rev().find(|&i| p[i - 1] < p[i]) {
        let j = (i..d).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
    out
}

/// The `d!` Kuhn simplices of the cubelet with corner `base`.
pub fn simplices_of_cubelet(grid: &GridSpec, base: &[usize]) -> Result<Vec<KuhnSimplex>> {
    crate::error::check_dim(grid.d, base.len())?;
    if base.iter().any(|&b| b + 1 > grid.n() - 1) {
        return Err(Error::InvalidInput(format!("cubelet base {base:?} out of range for N = {}", grid.n())));
    }
    Ok(permutations(grid.d).into_iter().map(|perm| KuhnSimplex { base: base.to_vec(), perm }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpernerOutcome {
    /// `vertices[i]` carries color `i`.
    Panchromatic { simplex: KuhnSimplex, vertices: Vec<Vec<usize>> },
    /// `axis` is 1-based, matching color indices.
    BoundaryViolation { vertex: Vec<usize>, axis: usize, face: Face, color: usize },
}

impl SpernerOutcome {
    pub fn to_json(&self) -> Value {
        match self {
            SpernerOutcome::Panchromatic { simplex, vertices } => json!({
                "type": "panchromatic",
                "base": simplex.base,
                "perm": simplex.perm,
                "vertices": vertices,
            }),
            SpernerOutcome::BoundaryViolation { vertex, axis, face, color } => json!({
                "type": "boundary_violation",
                "vertex": vertex,
                "axis": axis,
                "face": match face { Face::Zero => "zero", Face::One => "one" },
                "color": color,
            }),
        }
    }
}

/// Checks both Sperner boundary rules at `v`: no color `i` on `v_i = 0`,
/// no color 0 on any `v_i = N − 1`.
pub fn validate_color(grid: &GridSpec, v: &[usize], color: usize) -> Option<SpernerOutcome> {
    let top = grid.n() - 1;
    if color >= 1 && color <= grid.d && v[color - 1] == 0 {
        return Some(SpernerOutcome::BoundaryViolation { vertex: v.to_vec(), axis: color, face: Face::Zero, color });
    }
    if color == 0 {
        if let Some(i) = v.iter().position(|&x| x == top) {
            return Some(SpernerOutcome::BoundaryViolation { vertex: v.to_vec(), axis: i + 1, face: Face::One, color });
        }
    }
    None
}

pub type ColorFn<'a> = dyn Fn(&[usize]) -> Result<usize> + Send + Sync + 'a;

/// A vertex coloring with an insert-once memo and a call counter.
pub struct Coloring<'a> {
    f: Box<ColorFn<'a>>,
    memo: Mutex<HashMap<Vec<usize>, usize>>,
    calls: AtomicUsize,
}

impl<'a> Coloring<'a> {
    pub fn new(f: impl Fn(&[usize]) -> Result<usize> + Send + Sync + 'a) -> Self {
        Coloring { f: Box::new(f), memo: Mutex::new(HashMap::new()), calls: AtomicUsize::new(0) }
    }

    pub fn color(&self, v: &[usize]) -> Result<usize> {
        if let Some(&c) = self.memo.lock().unwrap().get(v) {
            return Ok(c);
        }
        let c = (self.f)(v)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(*self.memo.lock().unwrap().entry(v.to_vec()).or_insert(c))
    }

    /// Number of evaluations of the underlying function.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    /// Colors every grid vertex on `workers` threads.
    pub fn prefetch(&self, grid: &GridSpec, workers: usize) -> Result<()> {
        let total = grid.n().pow(grid.d as u32);
        let todo: Vec<Vec<usize>> =
            (0..total).map(|k| unrank(grid, k)).filter(|v| !self.memo.lock().unwrap().contains_key(v)).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let colored: Vec<Result<(Vec<usize>, usize)>> =
            pool.install(|| todo.into_par_iter().map(|v| (self.f)(&v).map(|c| (v, c))).collect());
        let mut memo = self.memo.lock().unwrap();
        for r in colored {
            let (v, c) = r?;
            self.calls.fetch_add(1, Ordering::Relaxed);
            memo.entry(v).or_insert(c);
        }
        Ok(())
    }
}

fn unrank(grid: &GridSpec, mut k: usize) -> Vec<usize> {
    let n = grid.n();
    let mut v = vec![0; grid.d];
    for slot in v.iter_mut().rev() {
        *slot = k % n;
        k /= n;
    }
    v
}

/// Cubelet corners in lexicographic order.
pub fn cubelets(grid: &GridSpec) -> impl Iterator<Item = Vec<usize>> + '_ {
    let m = grid.n() - 1;
    let total = m.pow(grid.d as u32);
    (0..total).map(move |mut k| {
        let mut v = vec![0; grid.d];
        for slot in v.iter_mut().rev() {
            *slot = k % m;
            k /= m;
        }
        v
    })
}

fn colors_of(grid: &GridSpec, coloring: &Coloring, vs: &[Vec<usize>]) -> Result<std::result::Result<Vec<usize>, SpernerOutcome>> {
    let mut cs = Vec::with_capacity(vs.len());
    for v in vs {
        let c = coloring.color(v)?;
        if c > grid.d {
            return Err(Error::InvalidInput(format!("color {c} out of range 0..={} at {v:?}", grid.d)));
        }
        if let Some(viol) = validate_color(grid, v, c) {
            return Ok(Err(viol));
        }
        cs.push(c);
    }
    Ok(Ok(cs))
}

fn panchromatic_order(cs: &[usize]) -> Option<Vec<usize>> {
    let mut slot = vec![usize::MAX; cs.len()];
    for (k, &c) in cs.iter().enumerate() {
        if slot[c] != usize::MAX {
            return None;
        }
        slot[c] = k;
    }
    Some(slot)
}

/// Scans cubelets lexicographically and their simplices in permutation
/// order; returns the first panchromatic simplex or the first boundary
/// violation met.
pub fn find_panchromatic(grid: &GridSpec, coloring: &Coloring) -> Result<SpernerOutcome> {
    let perms = permutations(grid.d);
    for base in cubelets(grid) {
        for perm in &perms {
            let simplex = KuhnSimplex { base: base.clone(), perm: perm.clone() };
            let vs = simplex.vertices();
            let cs = match colors_of(grid, coloring, &vs)? {
                Ok(cs) => cs,
                Err(viol) => return Ok(viol),
            };
            if let Some(order) = panchromatic_order(&cs) {
                let vertices = order.iter().map(|&k| vs[k].clone()).collect();
                return Ok(SpernerOutcome::Panchromatic { simplex, vertices });
            }
        }
    }
    Err(Error::ExhaustedWithoutWitness)
}

/// [`find_panchromatic`] after coloring all vertices on `workers` threads.
/// The scan order, hence the answer, does not depend on `workers`.
pub fn find_panchromatic_par(grid: &GridSpec, coloring: &Coloring, workers: usize) -> Result<SpernerOutcome> {
    if workers > 1 {
        coloring.prefetch(grid, workers)?;
    }
    find_panchromatic(grid, coloring)
}

/// Exhaustive count of panchromatic simplices; `None` on a boundary
/// violation.
pub fn count_panchromatic(grid: &GridSpec, coloring: &Coloring) -> Result<Option<usize>> {
    let perms = permutations(grid.d);
    let mut count = 0;
    for base in cubelets(grid) {
        for perm in &perms {
            let vs = KuhnSimplex { base: base.clone(), perm: perm.clone() }.vertices();
            match colors_of(grid, coloring, &vs)? {
                Ok(cs) => count += panchromatic_order(&cs).is_some() as usize,
                Err(_) => return Ok(None),
            }
        }
    }
    Ok(Some(count))
}

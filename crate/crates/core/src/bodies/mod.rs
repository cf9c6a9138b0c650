//! Declarative convex bodies and the separation oracles compiled from them.
//!
//! A [`BodySpec`] describes a compact convex set. Every body answers
//! [`BodySpec::weak_sep`]; all bodies except circuit-encoded ones also answer
//! [`BodySpec::strong_sep`]. Analytic shapes additionally support exact
//! projection and Hausdorff distance.

mod geometry;
mod oracle;

use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::json::{s, sv, J};
use crate::numerics::{LinCircuit, Matrix, Polynomial};

pub use geometry::{exact_project, hausdorff_distance, support, Hausdorff};
pub use oracle::{level_set_sep, minkowski_sum_sep};

/// Absolute slack used by the strong oracles of analytic shapes.
pub const FEAS_TOL: f64 = 1e-12;

/// A hyperplane through `anchor` with `‖normal‖∞ = 1`. The associated
/// halfspace kept by a cut is `{y : ⟨normal, y − anchor⟩ ≤ 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl Hyperplane {
    /// Normalises `raw` to unit ℓ∞ norm. Returns `None` for a zero vector.
    pub fn through(anchor: &[f64], raw: &[f64]) -> Option<Self> {
        let m = crate::numerics::linalg::norm_inf(raw);
        if !(m > 0.0) || !m.is_finite() {
            return None;
        }
        Some(Hyperplane { normal: raw.iter().map(|v| v / m).collect(), anchor: anchor.to_vec() })
    }

    pub fn to_json(&self) -> Value {
        json!({"normal": sv(&self.normal), "anchor": sv(&self.anchor)})
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeparationResult {
    Inside,
    Separated(Hyperplane),
}

impl SeparationResult {
    pub fn is_inside(&self) -> bool {
        matches!(self, SeparationResult::Inside)
    }
}

/// A convex function with value and subgradient.
pub trait ConvexFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
    /// JSON form, when the function is data rather than code.
    fn to_json(&self) -> Option<Value> {
        None
    }
}

pub type ConvexFn = Arc<dyn ConvexFunction>;

impl fmt::Debug for dyn ConvexFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_json() {
            Some(v) => write!(f, "ConvexFunction({v})"),
            None => write!(f, "ConvexFunction(<dim {}>)", self.dim()),
        }
    }
}

/// A polynomial used as a convex function.
pub struct PolyFn(pub Polynomial);

impl ConvexFunction for PolyFn {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.0.eval(x).unwrap_or(f64::NAN), self.0.grad(x).unwrap_or_else(|_| vec![f64::NAN; x.len()]))
    }
    fn to_json(&self) -> Option<Value> {
        Some(json!({"poly": self.0.to_json()}))
    }
}

/// The first output of a linear arithmetic circuit used as a convex function.
pub struct CircuitFn(pub LinCircuit);

impl ConvexFunction for CircuitFn {
    fn dim(&self) -> usize {
        self.0.num_inputs()
    }
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let v = self.0.eval(x).map(|o| o[0]).unwrap_or(f64::NAN);
        let g = self.0.subgradient(x).map(|m| m.row(0).to_vec()).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
        (v, g)
    }
    fn to_json(&self) -> Option<Value> {
        Some(json!({"circuit": self.0.to_json()}))
    }
}

/// A closure-backed convex function.
pub struct FnConvex<F> {
    dim: usize,
    f: F,
}

impl<F> FnConvex<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync + 'static,
{
    pub fn shared(dim: usize, f: F) -> ConvexFn {
        Arc::new(FnConvex { dim, f })
    }
}

impl<F> ConvexFunction for FnConvex<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.f)(x)
    }
}

/// A compact convex set.
#[derive(Debug, Clone)]
pub enum BodySpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x : A x ≤ b}`
    Polytope { a: Matrix, b: Vec<f64> },
    /// `Δ_ξ = {p : p ≥ ξ, Σ p = 1}` in dimension `dim`.
    SimplexXi { dim: usize, xi: f64 },
    Intersection(Vec<BodySpec>),
    /// Cartesian product; coordinates are concatenated in order.
    Product(Vec<BodySpec>),
    MinkowskiSum(Vec<WellBounded>),
    /// `{x : f(x) ≤ threshold}`
    LevelSet { f: ConvexFn, threshold: f64 },
    Shifted { base: Box<BodySpec>, offset: Vec<f64> },
    /// `{factor·y + offset : y ∈ base}` with `factor > 0`.
    Scaled { base: Box<BodySpec>, factor: f64, offset: Vec<f64> },
    /// A weak separation oracle given as a circuit with inputs `(z, δ)` and
    /// outputs `(b, a_1, …, a_d)`; the answer is Inside iff `b > 1/2`.
    WeakOnly { circuit: LinCircuit },
    /// The parallel body `B̄(base, eps)`, realised by shifting the margins of
    /// the base oracle.
    Parallel { base: Box<BodySpec>, eps: f64 },
}

/// A body with caller-supplied inner radius `r`, outer radius `R`, and an
/// optional center hint. The outer ball `B̄(center, R)` must contain the body
/// (the origin is used when no center is given).
#[derive(Debug, Clone)]
pub struct WellBounded {
    pub body: BodySpec,
    pub r: f64,
    pub big_r: f64,
    pub center: Option<Vec<f64>>,
}

impl WellBounded {
    pub fn new(body: BodySpec, r: f64, big_r: f64) -> Self {
        WellBounded { body, r, big_r, center: None }
    }

    pub fn with_center(mut self, c: Vec<f64>) -> Self {
        self.center = Some(c);
        self
    }

    pub fn outer_center(&self) -> Vec<f64> {
        self.center.clone().unwrap_or_else(|| vec![0.0; self.body.dim()])
    }

    pub fn to_json(&self) -> Value {
        let mut v = self.body.to_json();
        if let Value::Object(m) = &mut v {
            m.insert("r".into(), s(self.r));
            m.insert("R".into(), s(self.big_r));
            if let Some(c) = &self.center {
                m.insert("center_hint".into(), sv(c));
            }
        }
        v
    }

    pub fn from_json(j: &J) -> Result<Self> {
        let body = BodySpec::from_json(j)?;
        let r = j.field("r")?.as_scalar()?;
        let big_r = j.field("R")?.as_scalar()?;
        if !(r > 0.0 && big_r >= r) {
            return Err(j.err("need 0 < r ≤ R"));
        }
        let center = match j.opt("center_hint") {
            Some(c) => Some(c.as_vec()?),
            None => None,
        };
        Ok(WellBounded { body, r, big_r, center })
    }
}

impl BodySpec {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        BodySpec::Ball { center, radius }
    }

    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        BodySpec::Box { lo: vec![lo; d], hi: vec![hi; d] }
    }

    pub fn dim(&self) -> usize {
        match self {
            BodySpec::Ball { center, .. } => center.len(),
            BodySpec::Box { lo, .. } => lo.len(),
            BodySpec::Polytope { a, .. } => a.cols,
            BodySpec::SimplexXi { dim, .. } => *dim,
            BodySpec::Intersection(p) => p.first().map_or(0, |b| b.dim()),
            BodySpec::Product(p) => p.iter().map(|b| b.dim()).sum(),
            BodySpec::MinkowskiSum(p) => p.first().map_or(0, |b| b.body.dim()),
            BodySpec::LevelSet { f, .. } => f.dim(),
            BodySpec::Shifted { offset, .. } | BodySpec::Scaled { offset, .. } => offset.len(),
            BodySpec::WeakOnly { circuit } => circuit.num_inputs().saturating_sub(1),
            BodySpec::Parallel { base, .. } => base.dim(),
        }
    }

    /// Checks the structural invariants (positive radii, ordered boxes,
    /// nonzero polytope rows, matching part dimensions).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        match self {
            BodySpec::Ball { center, radius } => {
                if center.is_empty() || !(*radius > 0.0) {
                    return bad("ball needs a center and a positive radius");
                }
            }
            BodySpec::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                    return bad("box needs lo ≤ hi of equal length");
                }
            }
            BodySpec::Polytope { a, b } => {
                if a.rows != b.len() || a.cols == 0 {
                    return bad("polytope rows must match b");
                }
                if (0..a.rows).any(|i| a.row(i).iter().all(|v| *v == 0.0)) {
                    return bad("polytope rows must be nonzero");
                }
            }
            BodySpec::SimplexXi { dim, xi } => {
                if *dim == 0 || !(*xi >= 0.0) || *xi * *dim as f64 > 1.0 {
                    return bad("simplex_xi needs 0 ≤ ξ ≤ 1/d");
                }
            }
            BodySpec::Intersection(p) | BodySpec::Product(p) => {
                if p.is_empty() {
                    return bad("combinator needs at least one part");
                }
                for b in p {
                    b.validate()?;
                }
                if matches!(self, BodySpec::Intersection(_)) && p.iter().any(|b| b.dim() != p[0].dim()) {
                    return bad("intersection parts must share a dimension");
                }
            }
            BodySpec::MinkowskiSum(p) => {
                if p.is_empty() {
                    return bad("minkowski sum needs at least one part");
                }
                for w in p {
                    w.body.validate()?;
                    if w.body.dim() != p[0].body.dim() {
                        return bad("minkowski parts must share a dimension");
                    }
                }
            }
            BodySpec::LevelSet { threshold, .. } => {
                if !threshold.is_finite() {
                    return bad("level-set threshold must be finite");
                }
            }
            BodySpec::Shifted { base, offset } => {
                base.validate()?;
                if base.dim() != offset.len() {
                    return bad("shift offset dimension mismatch");
                }
            }
            BodySpec::Scaled { base, factor, offset } => {
                base.validate()?;
                if !(*factor > 0.0 && factor.is_finite()) {
                    return bad("scale factor must be positive");
                }
                if base.dim() != offset.len() {
                    return bad("scale offset dimension mismatch");
                }
            }
            BodySpec::WeakOnly { circuit } => {
                let d = self.dim();
                if d == 0 || circuit.num_outputs() != d + 1 {
                    return bad("weak circuit needs inputs (z, δ) and outputs (b, a)");
                }
            }
            BodySpec::Parallel { base, .. } => base.validate()?,
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        match self {
            BodySpec::Ball { center, radius } => json!({"type": "ball", "center": sv(center), "radius": s(*radius)}),
            BodySpec::Box { lo, hi } => json!({"type": "box", "lo": sv(lo), "hi": sv(hi)}),
            BodySpec::Polytope { a, b } => {
                let rows: Vec<Value> = (0..a.rows).map(|i| sv(a.row(i))).collect();
                json!({"type": "polytope", "A": rows, "b": sv(b)})
            }
            BodySpec::SimplexXi { dim, xi } => json!({"type": "simplex_xi", "dim": dim, "xi": s(*xi)}),
            BodySpec::Intersection(p) => {
                json!({"type": "intersection", "parts": p.iter().map(|b| b.to_json()).collect::<Vec<_>>()})
            }
            BodySpec::Product(p) => json!({"type": "product", "parts": p.iter().map(|b| b.to_json()).collect::<Vec<_>>()}),
            BodySpec::MinkowskiSum(p) => {
                json!({"type": "minkowski_sum", "parts": p.iter().map(|b| b.to_json()).collect::<Vec<_>>()})
            }
            BodySpec::LevelSet { f, threshold } => {
                json!({"type": "level_set", "f": f.to_json().unwrap_or(Value::Null), "threshold": s(*threshold)})
            }
            BodySpec::Shifted { base, offset } => json!({"type": "shifted", "base": base.to_json(), "offset": sv(offset)}),
            BodySpec::Scaled { base, factor, offset } => {
                json!({"type": "scaled", "base": base.to_json(), "factor": s(*factor), "offset": sv(offset)})
            }
            BodySpec::WeakOnly { circuit } => json!({"type": "weak_circuit", "circuit": circuit.to_json()}),
            BodySpec::Parallel { base, eps } => json!({"type": "parallel", "base": base.to_json(), "eps": s(*eps)}),
        }
    }

    pub fn from_json(j: &J) -> Result<BodySpec> {
        let tag = j.field("type")?.as_str()?;
        let parts = |key: &str| -> Result<Vec<BodySpec>> { j.field(key)?.items()?.iter().map(BodySpec::from_json).collect() };
        let body = match tag {
            "ball" => BodySpec::Ball { center: j.field("center")?.as_vec()?, radius: j.field("radius")?.as_scalar()? },
            "box" => BodySpec::Box { lo: j.field("lo")?.as_vec()?, hi: j.field("hi")?.as_vec()? },
            "polytope" => {
                let rows = j.field("A")?.as_matrix()?;
                if rows.iter().any(|r| r.len() != rows[0].len()) {
                    return Err(j.field("A")?.err("ragged rows"));
                }
                BodySpec::Polytope { a: Matrix::from_rows(&rows), b: j.field("b")?.as_vec()? }
            }
            "simplex_xi" => BodySpec::SimplexXi { dim: j.field("dim")?.as_usize()?, xi: j.field("xi")?.as_scalar()? },
            "intersection" => BodySpec::Intersection(parts("parts")?),
            "product" => BodySpec::Product(parts("parts")?),
            "minkowski_sum" => BodySpec::MinkowskiSum(
                j.field("parts")?.items()?.iter().map(WellBounded::from_json).collect::<Result<_>>()?,
            ),
            "level_set" => {
                let fj = j.field("f")?;
                let f: ConvexFn = if let Some(p) = fj.opt("poly") {
                    Arc::new(PolyFn(Polynomial::from_json(&p)?))
                } else if let Some(c) = fj.opt("circuit") {
                    Arc::new(CircuitFn(LinCircuit::from_json(&c)?))
                } else {
                    return Err(fj.err("expected {\"poly\": …} or {\"circuit\": …}"));
                };
                BodySpec::LevelSet { f, threshold: j.field("threshold")?.as_scalar()? }
            }
            "shifted" => BodySpec::Shifted {
                base: Box::new(BodySpec::from_json(&j.field("base")?)?),
                offset: j.field("offset")?.as_vec()?,
            },
            "scaled" => BodySpec::Scaled {
                base: Box::new(BodySpec::from_json(&j.field("base")?)?),
                factor: j.field("factor")?.as_scalar()?,
                offset: j.field("offset")?.as_vec()?,
            },
            "weak_circuit" => BodySpec::WeakOnly { circuit: LinCircuit::from_json(&j.field("circuit")?)? },
            "parallel" => BodySpec::Parallel {
                base: Box::new(BodySpec::from_json(&j.field("base")?)?),
                eps: j.field("eps")?.as_scalar()?,
            },
            other => return Err(j.field("type")?.err(&format!("unknown body type {other:?}"))),
        };
        body.validate().map_err(|e| j.err(&e.to_string()))?;
        Ok(body)
    }

    /// `B̄(self, eps)`. Balls, boxes (for `eps < 0`), polytopes (for
    /// `eps < 0`), products and intersections (for `eps < 0`) are shifted
    /// exactly; everything else is wrapped in [`BodySpec::Parallel`].
    pub fn parallel_body(&self, eps: f64) -> Result<BodySpec> {
        if eps == 0.0 {
            return Ok(self.clone());
        }
        let wrap = || BodySpec::Parallel { base: Box::new(self.clone()), eps };
        Ok(match self {
            BodySpec::Ball { center, radius } => {
                if radius + eps <= 0.0 {
                    return Err(Error::EmptyShrink { shrink: -eps });
                }
                BodySpec::Ball { center: center.clone(), radius: radius + eps }
            }
            BodySpec::Box { lo, hi } if eps < 0.0 => {
                let lo2: Vec<f64> = lo.iter().map(|v| v - eps).collect();
                let hi2: Vec<f64> = hi.iter().map(|v| v + eps).collect();
                if lo2.iter().zip(&hi2).any(|(l, h)| l > h) {
                    return Err(Error::EmptyShrink { shrink: -eps });
                }
                BodySpec::Box { lo: lo2, hi: hi2 }
            }
            BodySpec::Polytope { a, b } if eps < 0.0 => {
                let b2 = (0..a.rows).map(|i| b[i] + eps * crate::numerics::linalg::norm2(a.row(i))).collect();
                BodySpec::Polytope { a: a.clone(), b: b2 }
            }
            BodySpec::Intersection(p) if eps < 0.0 => {
                BodySpec::Intersection(p.iter().map(|b| b.parallel_body(eps)).collect::<Result<_>>()?)
            }
            BodySpec::Product(p) if eps < 0.0 => {
                BodySpec::Product(p.iter().map(|b| b.parallel_body(eps)).collect::<Result<_>>()?)
            }
            BodySpec::Shifted { base, offset } => {
                BodySpec::Shifted { base: Box::new(base.parallel_body(eps)?), offset: offset.clone() }
            }
            BodySpec::Scaled { base, factor, offset } => BodySpec::Scaled {
                base: Box::new(base.parallel_body(eps / factor)?),
                factor: *factor,
                offset: offset.clone(),
            },
            BodySpec::Parallel { base, eps: e1 } if *e1 >= 0.0 && e1 + eps >= 0.0 => base.parallel_body(e1 + eps)?,
            _ => wrap(),
        })
    }

    /// Exact strong separation. Fails for circuit-encoded bodies.
    pub fn strong_sep(&self, z: &[f64]) -> Result<SeparationResult> {
        oracle::sep_margin(self, z, 0.0, true)
    }

    /// Weak separation at tolerance `delta`: answers Inside whenever
    /// `z ∈ B̄(self, δ)`; a returned hyperplane is valid for `B̄(self, −δ)`.
    pub fn weak_sep(&self, z: &[f64], delta: f64) -> Result<SeparationResult> {
        oracle::sep_margin(self, z, delta, false)
    }

    /// True when the body contains the equality `Σ p = 1` of a
    /// [`BodySpec::SimplexXi`] at top level (directly or as an intersection
    /// part). Such bodies have empty interior and are optimised in the chart
    /// `p = (q, 1 − Σ q)`.
    pub fn simplex_chart_dim(&self) -> Option<usize> {
        match self {
            BodySpec::SimplexXi { dim, .. } => Some(*dim),
            BodySpec::Intersection(p) => p.iter().find_map(|b| b.simplex_chart_dim()),
            _ => None,
        }
    }

    /// True when no part of the body is circuit-encoded.
    pub fn has_strong_oracle(&self) -> bool {
        match self {
            BodySpec::WeakOnly { .. } => false,
            BodySpec::Intersection(p) | BodySpec::Product(p) => p.iter().all(|b| b.has_strong_oracle()),
            BodySpec::MinkowskiSum(p) => p.iter().all(|b| b.body.has_strong_oracle()),
            BodySpec::Shifted { base, .. } | BodySpec::Scaled { base, .. } | BodySpec::Parallel { base, .. } => {
                base.has_strong_oracle()
            }
            _ => true,
        }
    }
}

/// A weak separation oracle for `B̄(center, radius)` as a linear circuit.
/// The norm is replaced by the polyhedral gauge `max_k ⟨u_k, z − c⟩` over
/// unit directions `u_k` (an even circle grid of `n_dirs` directions in 2-D,
/// ± axes and ± pairwise diagonals otherwise), which underestimates the norm,
/// so every point of `B̄(ball, δ)` is answered Inside. The normal output is
/// `z − c`.
pub fn ball_weak_circuit(center: &[f64], radius: f64, n_dirs: usize) -> LinCircuit {
    use crate::numerics::rational::from_f64;
    use crate::numerics::CircuitBuilder;
    let d = center.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    if d == 2 {
        for k in 0..n_dirs.max(4) {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n_dirs.max(4) as f64;
            dirs.push(vec![t.cos(), t.sin()]);
        }
    } else {
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut u = vec![0.0; d];
                u[i] = s;
                dirs.push(u);
            }
            for j in (i + 1)..d {
                for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut u = vec![0.0; d];
                    u[i] = si * std::f64::consts::FRAC_1_SQRT_2;
                    u[j] = sj * std::f64::consts::FRAC_1_SQRT_2;
                    dirs.push(u);
                }
            }
        }
    }
    let mut b = CircuitBuilder::new(d + 1);
    let diffs: Vec<usize> = (0..d)
        .map(|j| {
            let z = b.input(j);
            let c = b.constant(from_f64(center[j]));
            b.sub(z, c)
        })
        .collect();
    let mut gauge: Option<usize> = None;
    for u in &dirs {
        let mut acc: Option<usize> = None;
        for j in 0..d {
            if u[j] == 0.0 {
                continue;
            }
            let t = b.scale(diffs[j], from_f64(u[j]));
            acc = Some(match acc {
                None => t,
                Some(a) => b.add(a, t),
            });
        }
        let s = acc.expect("direction with a nonzero entry");
        gauge = Some(match gauge {
            None => s,
            Some(g) => b.max(g, s),
        });
    }
    let delta = b.input(d);
    let half_r = b.constant(from_f64(0.5 + radius));
    let t = b.add(half_r, delta);
    let out = b.sub(t, gauge.expect("at least one direction"));
    let mut outputs = vec![out];
    outputs.extend(diffs);
    b.build(outputs).expect("well-formed by construction")
}

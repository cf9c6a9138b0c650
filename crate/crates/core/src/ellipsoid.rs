//! Central-cut ellipsoid method: feasibility with volume-based emptiness
//! certificates, sliding-objective convex minimisation, and approximate
//! projection onto oracle-described bodies.
//!
//! The ellipsoid is `E = {x : (x − c)ᵀ P⁻¹ (x − c) ≤ 1}`. A cut with normal
//! `a` keeps the half `{x : ⟨a, x − c⟩ ≤ 0}`.

use serde_json::{json, Value};
use statrs::function::gamma::ln_gamma;

use crate::bodies::{BodySpec, Hyperplane, SeparationResult, WellBounded};
use crate::error::{Error, Result};
use crate::json::{s, sv};
use crate::numerics::linalg::{dist, dot, sub};
use crate::numerics::Matrix;

/// The initial ball `B̄(center, radius)`, which must contain the target set.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Bounds {
    pub fn origin(d: usize, radius: f64) -> Self {
        Bounds { center: vec![0.0; d], radius }
    }

    /// The ball circumscribing `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Bounds { center: vec![0.5 * (lo + hi); d], radius: 0.5 * (hi - lo) * (d as f64).sqrt() * (1.0 + 1e-9) + 1e-12 }
    }

    pub fn of(w: &WellBounded) -> Self {
        Bounds { center: w.outer_center(), radius: w.big_r }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub center: Vec<f64>,
    pub shape: Matrix,
    pub iteration: usize,
}

/// `ln vol(B̄(0, r))` in dimension `d`.
pub fn log_ball_volume(d: usize, r: f64) -> f64 {
    let h = d as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0) + d as f64 * r.ln()
}

impl EllipsoidState {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let d = center.len();
        let mut shape = Matrix::identity(d);
        shape.data.iter_mut().for_each(|v| *v *= radius * radius);
        EllipsoidState { center, shape, iteration: 0 }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn log_volume(&self) -> f64 {
        let d = self.dim();
        match self.shape.log_det_pd() {
            Some(ld) => 0.5 * ld + log_ball_volume(d, 1.0),
            None => f64::NEG_INFINITY,
        }
    }

    /// `max_{x ∈ E} ⟨a, x − c⟩ = √(aᵀPa)`.
    pub fn width(&self, a: &[f64]) -> f64 {
        self.shape.quad(a).max(0.0).sqrt()
    }

    /// Applies a central cut. Returns false when the ellipsoid is degenerate
    /// in the cut direction.
    pub fn cut(&mut self, a: &[f64]) -> bool {
        let d = self.dim();
        let pa = self.shape.mul_vec(a);
        let apa = dot(a, &pa);
        if !(apa > 0.0) || !apa.is_finite() {
            return false;
        }
        let b: Vec<f64> = pa.iter().map(|v| v / apa.sqrt()).collect();
        let df = d as f64;
        if d == 1 {
            self.center[0] -= 0.5 * b[0];
            self.shape[(0, 0)] *= 0.25;
        } else {
            for i in 0..d {
                self.center[i] -= b[i] / (df + 1.0);
            }
            let f = df * df / (df * df - 1.0);
            let g = 2.0 / (df + 1.0);
            for i in 0..d {
                for j in 0..d {
                    self.shape[(i, j)] = f * (self.shape[(i, j)] - g * b[i] * b[j]);
                }
            }
        }
        self.shape.symmetrize();
        if self.shape.cholesky().is_none() {
            let tr = (0..d).map(|i| self.shape[(i, i)]).sum::<f64>() / df;
            for i in 0..d {
                self.shape[(i, i)] += 1e-12 * tr.max(f64::MIN_POSITIVE);
            }
        }
        self.iteration += 1;
        true
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = (0..self.shape.rows).map(|i| sv(self.shape.row(i))).collect();
        json!({"center": sv(&self.center), "shape": rows, "iteration": self.iteration})
    }
}

/// Witness that the target set is empty or has volume below `vol(B̄(0, η))`:
/// every cut in the history keeps the set, and the final ellipsoid, which
/// contains it, is too small.
#[derive(Debug, Clone, PartialEq)]
pub struct EmptinessCert {
    pub final_ellipsoid: EllipsoidState,
    pub cut_history: Vec<Hyperplane>,
    pub log_volume: f64,
    /// `ln vol(B̄(0, η))`.
    pub log_volume_bound: f64,
    pub eta: f64,
}

impl EmptinessCert {
    pub fn volume(&self) -> f64 {
        self.log_volume.exp()
    }

    pub fn volume_bound(&self) -> f64 {
        self.log_volume_bound.exp()
    }

    /// Re-checks the volume inequality.
    pub fn holds(&self) -> bool {
        self.final_ellipsoid.log_volume() < self.log_volume_bound
    }

    pub fn to_json(&self) -> Value {
        json!({
            "final_ellipsoid": self.final_ellipsoid.to_json(),
            "cut_history": self.cut_history.iter().map(|h| h.to_json()).collect::<Vec<_>>(),
            "log_volume": s(self.log_volume),
            "log_volume_bound": s(self.log_volume_bound),
            "eta": s(self.eta),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizeResult {
    Minimizer { z: Vec<f64>, value: f64 },
    Empty { cert: EmptinessCert },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Point(Vec<f64>),
    Empty(EmptinessCert),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    Separation,
    Objective,
    Bound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub cut: CutKind,
    pub log_volume: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Record one [`TraceRecord`] per cut.
    pub trace: bool,
    /// Extra iterations on top of the theoretical cap.
    pub extra_iterations: usize,
}

/// `⌈2d(d+1)·ln(R/η)⌉ + margin`.
pub fn feasibility_cap(d: usize, radius: f64, eta: f64) -> usize {
    let df = d as f64;
    (2.0 * df * (df + 1.0) * (radius / eta).ln().max(1.0)).ceil() as usize + 10 * d + 50
}

fn optimization_cap(d: usize, radius: f64, eta: f64, delta: f64) -> usize {
    let df = d as f64;
    let extra = 2.0 * df * (df + 1.0) * (1.0 + radius * radius.max(1.0) / delta).ln();
    feasibility_cap(d, radius, eta) + extra.ceil() as usize + 50 * d
}

pub type Objective<'a> = &'a dyn Fn(&[f64]) -> (f64, Vec<f64>);
pub type Oracle<'a> = &'a dyn Fn(&[f64]) -> Result<SeparationResult>;

struct Run {
    result: OptimizeResult,
    trace: Vec<TraceRecord>,
}

fn run(obj: Option<Objective>, sep: Oracle, bounds: &Bounds, eta: f64, delta: f64, opts: &Options) -> Result<Run> {
    let d = bounds.center.len();
    if d == 0 {
        return Err(Error::InvalidInput("zero-dimensional ellipsoid run".into()));
    }
    if !(eta > 0.0) || !(bounds.radius > 0.0) {
        return Err(Error::InvalidInput("need η > 0 and R > 0".into()));
    }
    let cap = match obj {
        None => feasibility_cap(d, bounds.radius, eta),
        Some(_) => optimization_cap(d, bounds.radius, eta, delta),
    } + opts.extra_iterations;
    let log_eta = log_ball_volume(d, eta);
    let mut e = EllipsoidState::ball(bounds.center.clone(), bounds.radius);
    let mut history: Vec<Hyperplane> = Vec::new();
    let mut trace = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut lower = f64::NEG_INFINITY;
    let guard = bounds.radius * (1.0 + 1e-9);
    for _ in 0..cap {
        let c = e.center.clone();
        let (normal, kind) = if dist(&c, &bounds.center) > guard {
            (sub(&c, &bounds.center), CutKind::Bound)
        } else {
            match sep(&c)? {
                SeparationResult::Separated(h) => (h.normal, CutKind::Separation),
                SeparationResult::Inside => {
                    let Some(f) = obj else {
                        return Ok(Run { result: OptimizeResult::Minimizer { z: c, value: 0.0 }, trace });
                    };
                    let (v, g) = f(&c);
                    if !v.is_finite() {
                        return Err(Error::InvalidInput("objective returned a non-finite value".into()));
                    }
                    if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
                        best = Some((c.clone(), v));
                    }
                    if g.iter().all(|x| *x == 0.0) {
                        return Ok(Run { result: OptimizeResult::Minimizer { z: c, value: v }, trace });
                    }
                    lower = lower.max(v - e.width(&g));
                    let bv = best.as_ref().unwrap().1;
                    if bv - lower <= delta {
                        let (z, value) = best.unwrap();
                        return Ok(Run { result: OptimizeResult::Minimizer { z, value }, trace });
                    }
                    (g, CutKind::Objective)
                }
            }
        };
        if !e.cut(&normal) {
            break;
        }
        if kind != CutKind::Objective {
            if let Some(h) = Hyperplane::through(&c, &normal) {
                history.push(h);
            }
        }
        let lv = e.log_volume();
        if opts.trace {
            trace.push(TraceRecord { iteration: e.iteration, cut: kind, log_volume: lv });
        }
        if best.is_none() && lv < log_eta {
            let cert = EmptinessCert { final_ellipsoid: e, cut_history: history, log_volume: lv, log_volume_bound: log_eta, eta };
            return Ok(Run { result: OptimizeResult::Empty { cert }, trace });
        }
        if best.is_some() && lv < log_eta + d as f64 * (delta.min(1.0) * 1e-6).ln() {
            break;
        }
    }
    match best {
        Some((z, value)) => Ok(Run { result: OptimizeResult::Minimizer { z, value }, trace }),
        None => Err(Error::IterationCapExceeded(cap)),
    }
}

/// Finds a point the oracle declares Inside, or certifies that the set is
/// empty or thinner than an `η`-ball.
pub fn feasibility(sep: Oracle, bounds: &Bounds, eta: f64) -> Result<Feasibility> {
    Ok(match run(None, sep, bounds, eta, 0.0, &Options::default())?.result {
        OptimizeResult::Minimizer { z, .. } => Feasibility::Point(z),
        OptimizeResult::Empty { cert } => Feasibility::Empty(cert),
    })
}

/// Weak constrained convex minimisation: `f(z) ≤ min_{B̄(X,−δ)} f + δ` with
/// `z` declared Inside by the weak oracle.
pub fn wcco(f: Objective, wso: Oracle, bounds: &Bounds, eta: f64, delta: f64) -> Result<OptimizeResult> {
    Ok(run(Some(f), wso, bounds, eta, delta, &Options::default())?.result)
}

/// [`wcco`] with options; also returns the cut trace.
pub fn wcco_traced(
    f: Objective,
    wso: Oracle,
    bounds: &Bounds,
    eta: f64,
    delta: f64,
    opts: &Options,
) -> Result<(OptimizeResult, Vec<TraceRecord>)> {
    let r = run(Some(f), wso, bounds, eta, delta, opts)?;
    Ok((r.result, r.trace))
}

/// Strong constrained convex minimisation: the returned point was accepted by
/// the strong oracle, so it lies in `X`.
pub fn scco(f: Objective, so: Oracle, bounds: &Bounds, eta: f64, delta: f64) -> Result<OptimizeResult> {
    Ok(run(Some(f), so, bounds, eta, delta, &Options::default())?.result)
}

/// Minimises `f` over a body, using the chart `p = (q, 1 − Σ q)` for bodies
/// that carry the simplex equality.
pub fn minimize_over(
    f: Objective,
    body: &WellBounded,
    strong: bool,
    tolerance: f64,
    eta: f64,
    delta: f64,
) -> Result<OptimizeResult> {
    let b = &body.body;
    let sep = |z: &[f64]| if strong { b.strong_sep(z) } else { b.weak_sep(z, tolerance) };
    match b.simplex_chart_dim() {
        None => Ok(run(Some(f), &sep, &Bounds::of(body), eta, delta, &Options::default())?.result),
        Some(1) => {
            let p = [1.0];
            match sep(&p)? {
                SeparationResult::Inside => Ok(OptimizeResult::Minimizer { value: f(&p).0, z: p.to_vec() }),
                SeparationResult::Separated(_) => {
                    let e = EllipsoidState { center: p.to_vec(), shape: Matrix::zeros(1, 1), iteration: 0 };
                    let cert = EmptinessCert {
                        final_ellipsoid: e,
                        cut_history: vec![],
                        log_volume: f64::NEG_INFINITY,
                        log_volume_bound: log_ball_volume(1, eta),
                        eta,
                    };
                    Ok(OptimizeResult::Empty { cert })
                }
            }
        }
        Some(d) => {
            let lift = |q: &[f64]| {
                let mut p = q.to_vec();
                p.push(1.0 - q.iter().sum::<f64>());
                p
            };
            let pull = |g: &[f64]| -> Vec<f64> { (0..d - 1).map(|j| g[j] - g[d - 1]).collect() };
            let fq = |q: &[f64]| {
                let (v, g) = f(&lift(q));
                (v, pull(&g))
            };
            let sq = |q: &[f64]| -> Result<SeparationResult> {
                Ok(match sep(&lift(q))? {
                    SeparationResult::Inside => SeparationResult::Inside,
                    SeparationResult::Separated(h) => match Hyperplane::through(q, &pull(&h.normal)) {
                        Some(hq) => SeparationResult::Separated(hq),
                        // A normal parallel to 1 is constant on the chart, so
                        // the set is empty there and any cut is valid.
                        None => {
                            let mut n = vec![0.0; d - 1];
                            n[0] = 1.0;
                            SeparationResult::Separated(Hyperplane { normal: n, anchor: q.to_vec() })
                        }
                    },
                })
            };
            let c = body.outer_center();
            let bounds = Bounds { center: c[..d - 1].to_vec(), radius: body.big_r };
            Ok(match run(Some(&fq), &sq, &bounds, eta, delta, &Options::default())?.result {
                OptimizeResult::Minimizer { z, value } => OptimizeResult::Minimizer { z: lift(&z), value },
                e => e,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectResult {
    Point(Vec<f64>),
    Empty(EmptinessCert),
}

impl ProjectResult {
    pub fn point(self) -> Option<Vec<f64>> {
        match self {
            ProjectResult::Point(z) => Some(z),
            ProjectResult::Empty(_) => None,
        }
    }
}

fn project(x_body: &WellBounded, x: &[f64], eps: f64, eta: f64, strong: bool) -> Result<ProjectResult> {
    crate::error::check_dim(x_body.body.dim(), x.len())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("projection accuracy must be positive".into()));
    }
    // The projection onto a product is the product of the projections.
    if let BodySpec::Product(parts) = &x_body.body {
        let c = x_body.outer_center();
        let share = eps / parts.len() as f64;
        let mut z = Vec::with_capacity(x.len());
        let mut at = 0;
        for part in parts {
            let k = part.dim();
            let block = WellBounded {
                body: part.clone(),
                r: x_body.r,
                big_r: x_body.big_r,
                center: Some(c[at..at + k].to_vec()),
            };
            match project(&block, &x[at..at + k], share, eta, strong)? {
                ProjectResult::Point(p) => z.extend(p),
                empty => return Ok(empty),
            }
            at += k;
        }
        return Ok(ProjectResult::Point(z));
    }
    let f = |y: &[f64]| {
        let r = sub(y, x);
        (0.5 * dot(&r, &r), r)
    };
    Ok(match minimize_over(&f, x_body, strong, eps, eta, 0.5 * eps * eps.min(1.0))? {
        OptimizeResult::Minimizer { z, .. } => ProjectResult::Point(z),
        OptimizeResult::Empty { cert } => ProjectResult::Empty(cert),
    })
}

/// Weak approximate projection: `z ∈ B̄(X, ε)` with
/// `‖z − x‖² ≤ min_{y ∈ B̄(X,−ε)} ‖x − y‖² + ε`.
pub fn weak_project(x_body: &WellBounded, x: &[f64], eps: f64, eta: f64) -> Result<ProjectResult> {
    project(x_body, x, eps, eta, false)
}

/// Strong approximate projection: `z ∈ X` with
/// `‖z − x‖² ≤ min_{y ∈ X} ‖x − y‖² + ε`.
pub fn strong_project(x_body: &WellBounded, x: &[f64], eps: f64, eta: f64) -> Result<ProjectResult> {
    project(x_body, x, eps, eta, true)
}

/// `ĉ_{d,η} = 1 + √d/η`, the constant relating approximate and exact
/// projections.
pub fn c_hat(d: usize, eta: f64) -> f64 {
    1.0 + (d as f64).sqrt() / eta
}

/// Convenience: weak feasibility for a well-bounded body.
pub fn feasibility_body(body: &WellBounded, eta: f64, delta: f64) -> Result<Feasibility> {
    let b: &BodySpec = &body.body;
    feasibility(&|z: &[f64]| b.weak_sep(z, delta), &Bounds::of(body), eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_ratio_per_cut() {
        for d in 1..6 {
            let mut e = EllipsoidState::ball(vec![0.0; d], 1.0);
            let v0 = e.log_volume();
            let mut a = vec![0.0; d];
            a[0] = 1.0;
            assert!(e.cut(&a));
            let bound = if d == 1 { 0.5f64.ln() } else { -1.0 / (2.0 * (d as f64 + 1.0)) };
            assert!(e.log_volume() - v0 <= bound + 1e-12, "d={d}");
        }
    }

    #[test]
    fn linear_over_box() {
        let body = BodySpec::cube(2, 0.0, 1.0);
        let f = |x: &[f64]| (x[0], vec![1.0, 0.0]);
        let r = wcco(&f, &|z: &[f64]| body.weak_sep(z, 1e-3), &Bounds::origin(2, 2.0), 1e-3, 1e-3).unwrap();
        match r {
            OptimizeResult::Minimizer { z, .. } => assert!(z[0] <= 1e-3),
            _ => panic!(),
        }
    }
}

//! Approximate Kakutani fixed points through the Sperner coloring of the
//! vector field `G(v) = Π̂_{F(v)}(v) − v`.
//!
//! The grid bound that guarantees success is far beyond an exhaustive scan
//! for most `(α, d)`, so [`solve_with`] scans a fixed-size grid over a
//! window of the cube and zooms the window onto each panchromatic simplex
//! until a vertex passes the residual test `‖G(v)‖ ≤ α/2`. Every returned
//! fixed point is verified; the grid bound only decides when the first
//! window is already fine enough.

use crate::bodies::{exact_project, BodySpec, WellBounded};
use crate::ellipsoid::{c_hat, strong_project, weak_project, EmptinessCert, ProjectResult};
use crate::json::{s, sv, J};
use crate::numerics::linalg::{dist, norm2};
use crate::numerics::LinCircuit;
use crate::sperner::{find_panchromatic_par, Coloring, GridSpec, SpernerOutcome};
use crate::{Error, Result};
use serde_json::{json, Value};
use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Exact Euclidean projections (analytic bodies only).
    Projection,
    StrongSep,
    WeakSep,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Projection => "projection",
            Mode::StrongSep => "strong",
            Mode::WeakSep => "weak",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "projection" => Some(Mode::Projection),
            "strong" => Some(Mode::StrongSep),
            "weak" => Some(Mode::WeakSep),
            _ => None,
        }
    }
}

/// Well-conditioning metadata: every value contains an `η`-ball and
/// `d_H(F(x), F(y)) ≤ L‖x − y‖^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditioning {
    pub eta: f64,
    pub l: f64,
    pub holder_q: f64,
}

impl Conditioning {
    pub fn new(eta: f64, l: f64) -> Self {
        Conditioning { eta, l, holder_q: 1.0 }
    }
}

/// Serializable shapes of `x ↦ F(x)`.
#[derive(Debug, Clone)]
pub enum MapTemplate {
    Constant(WellBounded),
    /// `F(x) = base + M(x)`, with `M(x)` optionally clipped into `[0,1]^d`.
    Shifted { base: WellBounded, offset: LinCircuit, clip: bool },
}

impl MapTemplate {
    fn eval(&self, x: &[f64]) -> Result<WellBounded> {
        match self {
            MapTemplate::Constant(b) => Ok(b.clone()),
            MapTemplate::Shifted { base, offset, clip } => {
                let mut m = offset.eval(x)?;
                if *clip {
                    m.iter_mut().for_each(|t| *t = t.clamp(0.0, 1.0));
                }
                let center = base.outer_center().iter().zip(&m).map(|(c, t)| c + t).collect();
                Ok(WellBounded {
                    body: shift(&base.body, &m),
                    r: base.r,
                    big_r: base.big_r,
                    center: Some(center),
                })
            }
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            MapTemplate::Constant(b) => json!({"type": "constant", "body": b.to_json()}),
            MapTemplate::Shifted { base, offset, clip } => {
                json!({"type": "shifted", "base": base.to_json(), "offset": offset.to_json(), "clip": clip})
            }
        }
    }

    pub fn from_json(j: &J) -> Result<Self> {
        match j.field("type")?.as_str()? {
            "constant" => Ok(MapTemplate::Constant(WellBounded::from_json(&j.field("body")?)?)),
            "shifted" => Ok(MapTemplate::Shifted {
                base: WellBounded::from_json(&j.field("base")?)?,
                offset: LinCircuit::from_json(&j.field("offset")?)?,
                clip: match j.opt("clip") {
                    Some(c) => c.as_bool()?,
                    None => true,
                },
            }),
            other => Err(j.field("type")?.err(&format!("unknown map type {other:?}"))),
        }
    }
}

fn shift(body: &BodySpec, m: &[f64]) -> BodySpec {
    match body {
        BodySpec::Ball { center, radius } => {
            BodySpec::Ball { center: center.iter().zip(m).map(|(c, t)| c + t).collect(), radius: *radius }
        }
        BodySpec::Box { lo, hi } => BodySpec::Box {
            lo: lo.iter().zip(m).map(|(c, t)| c + t).collect(),
            hi: hi.iter().zip(m).map(|(c, t)| c + t).collect(),
        },
        b => BodySpec::Shifted { base: Box::new(b.clone()), offset: m.to_vec() },
    }
}

pub type ValueMap = Arc<dyn Fn(&[f64]) -> Result<WellBounded> + Send + Sync>;

/// A correspondence `F : [0,1]^d ⇉ R^d` given pointwise as well-bounded
/// bodies.
#[derive(Clone)]
pub struct Correspondence {
    pub d: usize,
    pub mode: Mode,
    pub cond: Conditioning,
    map: ValueMap,
    template: Option<MapTemplate>,
}

impl std::fmt::Debug for Correspondence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Correspondence").field("d", &self.d).field("mode", &self.mode).field("cond", &self.cond).finish()
    }
}

impl Correspondence {
    pub fn new(
        d: usize,
        mode: Mode,
        cond: Conditioning,
        map: impl Fn(&[f64]) -> Result<WellBounded> + Send + Sync + 'static,
    ) -> Self {
        Correspondence { d, mode, cond, map: Arc::new(map), template: None }
    }

    pub fn from_template(d: usize, mode: Mode, cond: Conditioning, t: MapTemplate) -> Result<Self> {
        let inner = t.clone();
        let dim = match &t {
            MapTemplate::Constant(b) => b.body.dim(),
            MapTemplate::Shifted { base, offset, .. } => {
                crate::error::check_dim(d, offset.num_inputs())?;
                crate::error::check_dim(base.body.dim(), offset.num_outputs())?;
                base.body.dim()
            }
        };
        crate::error::check_dim(d, dim)?;
        Ok(Correspondence { d, mode, cond, map: Arc::new(move |x| inner.eval(x)), template: Some(t) })
    }

    pub fn value_at(&self, x: &[f64]) -> Result<WellBounded> {
        crate::error::check_dim(self.d, x.len())?;
        (self.map)(x)
    }

    /// `Π̂_{F(x)}(y)` at accuracy `eps`, not clipped.
    pub fn project(&self, x: &[f64], y: &[f64], eps: f64) -> Result<ProjectResult> {
        let body = self.value_at(x)?;
        match self.mode {
            Mode::Projection => match exact_project(&body.body, y) {
                Ok(p) => Ok(ProjectResult::Point(p)),
                Err(Error::UnsupportedBody(_)) => strong_project(&body, y, eps, self.cond.eta),
                Err(e) => Err(e),
            },
            Mode::StrongSep => strong_project(&body, y, eps, self.cond.eta),
            Mode::WeakSep => weak_project(&body, y, eps, self.cond.eta),
        }
    }

    pub fn to_json(&self) -> Option<Value> {
        Some(json!({
            "d": self.d,
            "mode": self.mode.name(),
            "eta": s(self.cond.eta),
            "L": s(self.cond.l),
            "holder_q": s(self.cond.holder_q),
            "map": self.template.as_ref()?.to_json(),
        }))
    }

    pub fn from_json(j: &J) -> Result<Self> {
        let d = j.field("d")?.as_usize()?;
        let mj = j.field("mode")?;
        let mode = Mode::parse(mj.as_str()?).ok_or_else(|| mj.err("mode must be projection, strong or weak"))?;
        let eta = j.field("eta")?.as_scalar()?;
        if !(eta > 0.0) {
            return Err(j.field("eta")?.err("η must be positive"));
        }
        let cond = Conditioning { eta, l: j.field("L")?.as_scalar()?, holder_q: j.scalar_or("holder_q", 1.0)? };
        let t = MapTemplate::from_json(&j.field("map")?)?;
        Self::from_template(d, mode, cond, t).map_err(|e| match e {
            Error::DimensionMismatch { .. } => j.field("map").map(|m| m.err(&e.to_string())).unwrap_or(e),
            e => e,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Vector(Vec<f64>),
    Empty(EmptinessCert),
}

fn clip_to(p: &[f64], lo: &[f64], width: f64) -> Vec<f64> {
    p.iter().zip(lo).map(|(t, l)| t.clamp(*l, l + width)).collect()
}

/// `G(v) = clip(Π̂_{F(v)}(v)) − v` with the projection clipped into the cube.
pub fn vector_field(f: &Correspondence, v: &[f64], eps: f64) -> Result<FieldValue> {
    Ok(match f.project(v, v, eps)? {
        ProjectResult::Point(p) => {
            let z = clip_to(&p, &vec![0.0; v.len()], 1.0);
            FieldValue::Vector(z.iter().zip(v).map(|(a, b)| a - b).collect())
        }
        ProjectResult::Empty(c) => FieldValue::Empty(c),
    })
}

/// Color 0 when `G ≥ 0`, else the first `i` with `G_i ≤ 0`. When that
/// breaks a boundary rule of the grid vertex `v` (side `n`), the first color
/// among `1, …, d, 0` that satisfies the boundary rules is used, preferring
/// one whose sign condition also holds.
pub fn color_rule(g: &[f64], v: &[usize], n: usize) -> usize {
    let top = n - 1;
    let boundary_ok = |c: usize| if c == 0 { v.iter().all(|&k| k != top) } else { v[c - 1] != 0 };
    let sign_ok = |c: usize| if c == 0 { g.iter().all(|&t| t >= 0.0) } else { g[c - 1] <= 0.0 };
    let preferred = if g.iter().all(|&t| t >= 0.0) {
        0
    } else {
        1 + g.iter().position(|&t| t <= 0.0).unwrap()
    };
    if boundary_ok(preferred) {
        return preferred;
    }
    let order = || (1..=g.len()).chain(std::iter::once(0));
    order()
        .find(|&c| boundary_ok(c) && sign_ok(c))
        .or_else(|| order().find(|&c| boundary_ok(c)))
        .expect("some color satisfies the boundary rules")
}

/// Grid and accuracy from the membership argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveParams {
    pub alpha: f64,
    pub eps: f64,
    pub ell: u32,
    pub n: f64,
    /// Longest simplex edge `√d/(N − 1)`.
    pub xi_mesh: f64,
}

impl SolveParams {
    pub fn cubelets(&self, d: usize) -> f64 {
        (self.n - 1.0).powi(d as i32)
    }

    pub fn to_json(&self) -> Value {
        json!({"alpha": s(self.alpha), "epsilon": s(self.eps), "ell": self.ell, "N": s(self.n), "xi_mesh": s(self.xi_mesh)})
    }
}

/// `ε ≤ min{a/13, a²/(117 d^{3/2})}` and `N ≥ max{d/a, √d(L+1)/a,
/// 9d^{5/2}/a², 9d²(L+1)/a}` with `a = α/10`, rounded up to a power of two.
pub fn theory_params(alpha: f64, d: usize, l: f64) -> Result<SolveParams> {
    if !(alpha > 0.0 && alpha < 1.0) || d == 0 || !(l >= 0.0) {
        return Err(Error::InvalidInput(format!("need α ∈ (0,1), d ≥ 1, L ≥ 0; got α={alpha}, d={d}, L={l}")));
    }
    let a = alpha / 10.0;
    let df = d as f64;
    let eps = (a / 13.0).min(a * a / (117.0 * df.powf(1.5)));
    let n_min = (df / a)
        .max(df.sqrt() * (l + 1.0) / a)
        .max(9.0 * df.powf(2.5) / (a * a))
        .max(9.0 * df * df * (l + 1.0) / a);
    let ell = (n_min.log2().ceil() as u32).max(1);
    let n = 2f64.powi(ell as i32);
    Ok(SolveParams { alpha, eps, ell, n, xi_mesh: df.sqrt() / (n - 1.0) })
}

/// [`theory_params`] with the grid checked against a cubelet budget.
pub fn choose_params(alpha: f64, d: usize, l: f64, eta: f64, cubelet_budget: f64) -> Result<SolveParams> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidInput(format!("need η ∈ (0,1), got {eta}")));
    }
    let p = theory_params(alpha, d, l)?;
    if p.ell > 30 || p.cubelets(d) > cubelet_budget {
        return Err(Error::ResourceBound(format!(
            "grid N = 2^{} gives {:.3e} cubelets, budget {:.3e}",
            p.ell,
            p.cubelets(d),
            cubelet_budget
        )));
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub enum KakutaniOutcome {
    FixedPoint { x: Vec<f64>, z: Vec<f64>, residual: f64 },
    /// A vertex passed the caller's acceptance check before `‖G‖ ≤ α/2`.
    Accepted { x: Vec<f64>, z: Vec<f64>, residual: f64 },
    EmptyCert { x: Vec<f64>, cert: EmptinessCert },
    LipschitzCert { p: Vec<f64>, q: Vec<f64>, z: Vec<f64>, w: Vec<f64>, eps: f64, lhs: f64, rhs: f64 },
}

impl KakutaniOutcome {
    pub fn tag(&self) -> &'static str {
        match self {
            KakutaniOutcome::FixedPoint { .. } => "fixed_point",
            KakutaniOutcome::Accepted { .. } => "accepted",
            KakutaniOutcome::EmptyCert { .. } => "empty_cert",
            KakutaniOutcome::LipschitzCert { .. } => "lipschitz_cert",
        }
    }

    pub fn is_fixed_point(&self) -> bool {
        matches!(self, KakutaniOutcome::FixedPoint { .. })
    }

    pub fn to_json(&self) -> Value {
        match self {
            KakutaniOutcome::FixedPoint { x, z, residual } | KakutaniOutcome::Accepted { x, z, residual } => {
                json!({"type": self.tag(), "x": sv(x), "z": sv(z), "residual": s(*residual)})
            }
            KakutaniOutcome::EmptyCert { x, cert } => json!({"type": self.tag(), "x": sv(x), "cert": cert.to_json()}),
            KakutaniOutcome::LipschitzCert { p, q, z, w, eps, lhs, rhs } => json!({
                "type": self.tag(),
                "p": sv(p), "q": sv(q), "z": sv(z), "w": sv(w),
                "epsilon": s(*eps), "lhs": s(*lhs), "rhs": s(*rhs),
            }),
        }
    }

    /// Reads back everything but `empty_cert`, which is replayed by
    /// re-running the oracle at `x` instead.
    pub fn from_json(j: &J) -> Result<Self> {
        let vec = |k: &str| j.field(k)?.as_vec();
        let sc = |k: &str| j.field(k)?.as_scalar();
        let tj = j.field("type")?;
        Ok(match tj.as_str()? {
            "fixed_point" => KakutaniOutcome::FixedPoint { x: vec("x")?, z: vec("z")?, residual: sc("residual")? },
            "accepted" => KakutaniOutcome::Accepted { x: vec("x")?, z: vec("z")?, residual: sc("residual")? },
            "lipschitz_cert" => KakutaniOutcome::LipschitzCert {
                p: vec("p")?,
                q: vec("q")?,
                z: vec("z")?,
                w: vec("w")?,
                eps: sc("epsilon")?,
                lhs: sc("lhs")?,
                rhs: sc("rhs")?,
            },
            other => return Err(tj.err(&format!("outcome type {other:?} cannot be read back"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Largest grid scanned at once when the theoretical grid is used.
    pub cubelet_budget: f64,
    /// Window grid exponent; defaults to 5, 4, 3 for `d = 1, 2, 3` and 2
    /// beyond. It grows by one whenever the zoom revisits a window.
    pub window_ell: Option<u32>,
    pub max_levels: usize,
    pub workers: usize,
    /// Projection accuracy; defaults to the theoretical value when the
    /// theoretical grid fits the budget and to `α/130` otherwise.
    pub eps: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { cubelet_budget: 1e6, window_ell: None, max_levels: 80, workers: 1, eps: None }
    }
}

#[derive(Debug, Clone)]
pub struct SolveStats {
    pub theory: SolveParams,
    /// True when the first window used the theoretical grid.
    pub theoretical_grid: bool,
    pub eps: f64,
    pub window_ell: u32,
    pub levels: usize,
    pub vertices_colored: usize,
    pub window_lo: Vec<f64>,
    pub window_width: f64,
}

impl SolveStats {
    pub fn to_json(&self) -> Value {
        json!({
            "theory": self.theory.to_json(),
            "theoretical_grid": self.theoretical_grid,
            "epsilon": s(self.eps),
            "window_ell": self.window_ell,
            "levels": self.levels,
            "vertices_colored": self.vertices_colored,
            "window_lo": sv(&self.window_lo),
            "window_width": s(self.window_width),
        })
    }
}

fn default_window_ell(d: usize) -> u32 {
    match d {
        1 => 5,
        2 => 4,
        3 => 3,
        _ => 2,
    }
}

/// `L̂_{d,η} = 3(1 + ĉ_{d,η})`.
pub fn lipschitz_slack(d: usize, eta: f64) -> f64 {
    3.0 * (1.0 + c_hat(d, eta))
}

/// Double-projection test on a pair: `‖Π̂_{F(p)}(ŵ) − ŵ‖` against
/// `L‖p − q‖^q + L̂ε` where `ŵ = Π̂_{F(q)}(q)`.
fn lipschitz_test(f: &Correspondence, p: &[f64], q: &[f64], w: &[f64], eps: f64) -> Result<Option<KakutaniOutcome>> {
    let z = match f.project(p, w, eps)? {
        ProjectResult::Point(z) => z,
        ProjectResult::Empty(cert) => return Ok(Some(KakutaniOutcome::EmptyCert { x: p.to_vec(), cert })),
    };
    let lhs = dist(&z, w);
    let rhs = f.cond.l * dist(p, q).powf(f.cond.holder_q) + lipschitz_slack(f.d, f.cond.eta) * eps;
    Ok((lhs > rhs).then(|| KakutaniOutcome::LipschitzCert {
        p: p.to_vec(),
        q: q.to_vec(),
        z,
        w: w.to_vec(),
        eps,
        lhs,
        rhs,
    }))
}

/// Replays a Lipschitz certificate: true when `lhs > rhs` is reproduced.
pub fn replay_lipschitz_cert(f: &Correspondence, cert: &KakutaniOutcome) -> Result<bool> {
    let KakutaniOutcome::LipschitzCert { p, q, eps, .. } = cert else {
        return Err(Error::InvalidInput("not a Lipschitz certificate".into()));
    };
    let w = match f.project(q, q, *eps)? {
        ProjectResult::Point(w) => w,
        ProjectResult::Empty(_) => return Ok(false),
    };
    Ok(lipschitz_test(f, p, q, &w, *eps)?.is_some_and(|o| matches!(o, KakutaniOutcome::LipschitzCert { .. })))
}

pub fn solve(f: &Correspondence, alpha: f64) -> Result<KakutaniOutcome> {
    Ok(solve_with(f, alpha, &SolveOptions::default())?.0)
}

pub fn solve_with(f: &Correspondence, alpha: f64, opts: &SolveOptions) -> Result<(KakutaniOutcome, SolveStats)> {
    solve_accepting(f, alpha, opts, &|_, _| Ok(false))
}

/// Acceptance hook for [`solve_accepting`]: `(x, projection of x onto F(x))`.
pub type AcceptFn<'a> = dyn Fn(&[f64], &[f64]) -> Result<bool> + 'a;

/// [`solve_with`], additionally returning [`KakutaniOutcome::Accepted`] for
/// the first panchromatic vertex `x` with `accept(x, z)`, where `z` is its
/// projection onto `F(x)`.
pub fn solve_accepting(
    f: &Correspondence,
    alpha: f64,
    opts: &SolveOptions,
    accept: &AcceptFn,
) -> Result<(KakutaniOutcome, SolveStats)> {
    let d = f.d;
    let theory = theory_params(alpha, d, f.cond.l)?;
    let theoretical_grid = theory.ell <= 30 && theory.cubelets(d) <= opts.cubelet_budget;
    let eps = opts.eps.unwrap_or(if theoretical_grid { theory.eps } else { alpha / 130.0 });
    let ell = if theoretical_grid { theory.ell } else { opts.window_ell.unwrap_or_else(|| default_window_ell(d)) };
    let mut ell = ell;
    let mut grid = GridSpec::new(d, ell)?;
    let mut m = (grid.n() - 1) as f64;
    let mut visited: HashSet<(Vec<u64>, u64, u32)> = HashSet::new();
    let mut lo = vec![0.0; d];
    let mut width = 1.0;
    let mut stats = SolveStats {
        theory,
        theoretical_grid,
        eps,
        window_ell: ell,
        levels: 0,
        vertices_colored: 0,
        window_lo: lo.clone(),
        window_width: width,
    };
    let cube = vec![0.0; d];
    for level in 0..opts.max_levels {
        stats.levels = level + 1;
        stats.window_lo = lo.clone();
        stats.window_width = width;
        // A revisited window means the zoom is cycling: the grid is too
        // coarse for the map there, so refine it.
        let key = |lo: &[f64], w: f64, ell: u32| (lo.iter().map(|t| (t * 1e9).round() as u64).collect(), (w * 1e9).round() as u64, ell);
        if !visited.insert(key(&lo, width, ell)) {
            let finer = ((1u64 << (ell + 1)) + 1) as f64;
            if finer.powi(d as i32) > opts.cubelet_budget {
                break;
            }
            ell += 1;
            grid = GridSpec::new(d, ell)?;
            m = (grid.n() - 1) as f64;
            stats.window_ell = ell;
            visited.insert(key(&lo, width, ell));
        }
        let (wlo, w) = (lo.clone(), width);
        // Coarse windows only need projections accurate to their spacing;
        // fixed-point claims are re-checked at `eps`.
        let eps_level = if theoretical_grid { eps } else { eps.max(w / m / 130.0) };
        let to_x = |v: &[usize]| -> Vec<f64> { v.iter().zip(&wlo).map(|(&k, l)| l + w * k as f64 / m).collect() };
        let projected: Mutex<HashMap<Vec<usize>, Vec<f64>>> = Mutex::new(HashMap::new());
        let empty: Mutex<Option<(Vec<f64>, EmptinessCert)>> = Mutex::new(None);
        let coloring = Coloring::new(|v: &[usize]| {
            let x = to_x(v);
            match f.project(&x, &x, eps_level)? {
                ProjectResult::Point(p) => {
                    let g: Vec<f64> = clip_to(&p, &wlo, w).iter().zip(&x).map(|(a, b)| a - b).collect();
                    projected.lock().unwrap().insert(v.to_vec(), p);
                    Ok(color_rule(&g, v, grid.n()))
                }
                ProjectResult::Empty(cert) => {
                    *empty.lock().unwrap() = Some((x, cert));
                    Err(Error::ExhaustedWithoutWitness)
                }
            }
        });
        let found = find_panchromatic_par(&grid, &coloring, opts.workers);
        stats.vertices_colored += coloring.calls();
        drop(coloring);
        if let Some((x, cert)) = empty.lock().unwrap().take() {
            return Ok((KakutaniOutcome::EmptyCert { x, cert }, stats));
        }
        let vertices = match found? {
            SpernerOutcome::Panchromatic { vertices, .. } => vertices,
            SpernerOutcome::BoundaryViolation { vertex, axis, .. } => {
                return Err(Error::InvalidInput(format!(
                    "constructed coloring broke the boundary rule at {vertex:?}, axis {axis}"
                )))
            }
        };
        let projected = projected.into_inner().unwrap();
        let xs: Vec<Vec<f64>> = vertices.iter().map(|v| to_x(v)).collect();
        let ps: Vec<&Vec<f64>> = vertices.iter().map(|v| &projected[v]).collect();
        for (x, p) in xs.iter().zip(&ps) {
            let mut z = clip_to(p, &cube, 1.0);
            let mut residual = dist(x, &z);
            if residual <= alpha / 2.0 && eps_level > eps {
                z = match f.project(x, x, eps)? {
                    ProjectResult::Point(p) => clip_to(&p, &cube, 1.0),
                    ProjectResult::Empty(cert) => return Ok((KakutaniOutcome::EmptyCert { x: x.clone(), cert }, stats)),
                };
                residual = dist(x, &z);
            }
            if residual <= alpha / 2.0 {
                return Ok((KakutaniOutcome::FixedPoint { x: x.clone(), z, residual }, stats));
            }
        }
        for (x, p) in xs.iter().zip(&ps) {
            let z = clip_to(p, &cube, 1.0);
            if accept(x, &z)? {
                let residual = dist(x, &z);
                return Ok((KakutaniOutcome::Accepted { x: x.clone(), z, residual }, stats));
            }
        }
        for (i, p) in xs.iter().enumerate() {
            for (j, q) in xs.iter().enumerate() {
                if i != j {
                    if let Some(cert) = lipschitz_test(f, p, q, ps[j], eps_level)? {
                        return Ok((cert, stats));
                    }
                }
            }
        }
        // Zoom onto the 0-colored vertex; a simplex touching an inner
        // window face means the fixed point may lie outside, so the window
        // only moves.
        let touches = vertices.iter().any(|v| {
            v.iter().zip(&lo).any(|(&k, &l)| (k == 0 && l > 0.0) || (k == grid.n() - 1 && l + width < 1.0))
        });
        let next = if touches { width } else { width * 2.0 / m };
        if next < 1e-13 {
            break;
        }
        lo = xs[0].iter().map(|c| (c - next / 2.0).clamp(0.0, 1.0 - next)).collect();
        width = next;
    }
    Err(Error::ResourceBound(format!(
        "no vertex with ‖G‖ ≤ α/2 after {} windows ({} vertices colored)",
        stats.levels, stats.vertices_colored
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Residual {
    Value { residual: f64, z: Vec<f64> },
    Empty(EmptinessCert),
}

impl Residual {
    pub fn value(&self) -> Option<f64> {
        match self {
            Residual::Value { residual, .. } => Some(*residual),
            Residual::Empty(_) => None,
        }
    }
}

/// `‖x − Π̂_{F(x)}(x)‖` at accuracy `α/10`.
pub fn check_fixed_point(f: &Correspondence, x: &[f64], alpha: f64) -> Result<Residual> {
    if x.iter().any(|t| !(-1e-12..=1.0 + 1e-12).contains(t)) {
        return Err(Error::InvalidInput("x must lie in [0,1]^d".into()));
    }
    Ok(match f.project(x, x, alpha / 10.0)? {
        ProjectResult::Point(z) => Residual::Value { residual: norm2(&crate::numerics::linalg::sub(x, &z)), z },
        ProjectResult::Empty(c) => Residual::Empty(c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_window_sizes() {
        assert_eq!(default_window_ell(1), 5);
        assert_eq!(default_window_ell(2), 4);
        assert_eq!(default_window_ell(4), 2);
        assert_eq!(default_window_ell(9), 2);
    }

    #[test]
    fn color_rule_prefers_allowed_colors() {
        assert_eq!(color_rule(&[0.0, 0.0], &[0, 0], 4), 0);
        assert_eq!(color_rule(&[0.0, 0.0], &[3, 1], 4), 1);
        assert_eq!(color_rule(&[0.0, 0.0], &[0, 3], 4), 2);
    }
}

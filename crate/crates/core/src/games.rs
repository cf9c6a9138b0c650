//! Concave games, the regularized best-response correspondence
//! `F(x) = {y ∈ S_η : φ(x, y) ≥ max_{S_{−η}} φ(x, ·) − ε}` with
//! `φ(x, y) = Σ_i u_i(y_i, x_{−i}) − γ‖y‖²`, and equilibrium checking.

use crate::bodies::{BodySpec, FnConvex, SeparationResult, WellBounded};
use crate::ellipsoid::{minimize_over, scco, wcco, Bounds, EmptinessCert, OptimizeResult};
use crate::json::{s, sv, J};
use crate::kakutani::{replay_lipschitz_cert, solve_accepting, Conditioning, Correspondence, KakutaniOutcome, Mode, SolveOptions, SolveStats};
use crate::numerics::linalg::{dist, dot, norm2};
use crate::numerics::rational::{format_rational, to_f64, Rational};
use crate::numerics::{LinCircuit, Polynomial};
use crate::reductions::{clamp_poly, ClampPoly};
use crate::{Error, Result};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex};

/// Target `t_j(x)` of a tracking utility.
#[derive(Debug, Clone)]
pub enum Target {
    Const(Rational),
    Var(usize),
    /// `p(x_a − x_b) + shift` for a clamp polynomial `p`, argument clipped
    /// to `[−1, 1]`.
    Clamp { a: usize, b: usize, shift: Rational, poly: Arc<ClampPoly> },
}

impl Target {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Target::Const(c) => to_f64(c),
            Target::Var(j) => x[*j],
            Target::Clamp { a, b, shift, poly } => poly.eval(x[*a] - x[*b]) + to_f64(shift),
        }
    }

    /// Adds `scale·∇t(x)` to `g`.
    fn add_grad(&self, x: &[f64], scale: f64, g: &mut [f64]) {
        match self {
            Target::Const(_) => {}
            Target::Var(j) => g[*j] += scale,
            Target::Clamp { a, b, poly, .. } => {
                let dp = poly.deriv(x[*a] - x[*b]);
                g[*a] += scale * dp;
                g[*b] -= scale * dp;
            }
        }
    }

    fn vars(&self) -> Vec<usize> {
        match self {
            Target::Const(_) => vec![],
            Target::Var(j) => vec![*j],
            Target::Clamp { a, b, .. } => vec![*a, *b],
        }
    }

    /// Bound on `|t|` over `[−B, B]^k`.
    fn bound(&self, big_b: f64) -> f64 {
        match self {
            Target::Const(c) => to_f64(c).abs(),
            Target::Var(_) => big_b,
            Target::Clamp { poly, shift, .. } => {
                let sh = to_f64(shift);
                (poly.max_value + sh).abs().max((poly.min_value + sh).abs())
            }
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Target::Const(c) => json!({"const": format_rational(c)}),
            Target::Var(j) => json!({"var": j}),
            Target::Clamp { a, b, shift, poly } => json!({"clamp": {
                "a": a, "b": b, "shift": format_rational(shift), "epsilon": format_rational(&poly.eps),
            }}),
        }
    }

    fn from_json(j: &J, cache: &mut HashMap<String, Arc<ClampPoly>>) -> Result<Self> {
        if let Some(c) = j.opt("const") {
            return Ok(Target::Const(c.as_rational()?));
        }
        if let Some(v) = j.opt("var") {
            return Ok(Target::Var(v.as_usize()?));
        }
        if let Some(c) = j.opt("clamp") {
            let eps = c.field("epsilon")?.as_rational()?;
            let key = format_rational(&eps);
            let poly = match cache.get(&key) {
                Some(p) => p.clone(),
                None => {
                    let p = Arc::new(clamp_poly(&eps).map_err(|e| c.field("epsilon").map(|f| f.err(&e.to_string())).unwrap_or(e))?);
                    cache.insert(key, p.clone());
                    p
                }
            };
            let shift = match c.opt("shift") {
                Some(v) => v.as_rational()?,
                None => Rational::zero(),
            };
            return Ok(Target::Clamp { a: c.field("a")?.as_usize()?, b: c.field("b")?.as_usize()?, shift, poly });
        }
        Err(j.err("target needs one of \"const\", \"var\", \"clamp\""))
    }
}

#[derive(Debug, Clone)]
pub enum Utility {
    Poly(Polynomial),
    /// First output of the circuit; its Lipschitz constant is the game's `L`.
    Circuit(LinCircuit),
    /// `c − Σ_j (x_{own_j} − t_j(x))²`, where no target reads an own variable.
    Tracking { c: Rational, own: Vec<usize>, targets: Vec<Target> },
}

impl Utility {
    pub fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Utility::Poly(p) => Ok((p.eval(x)?, p.grad(x)?)),
            Utility::Circuit(c) => Ok((c.eval(x)?[0], c.subgradient(x)?.row(0).to_vec())),
            Utility::Tracking { c, own, targets } => {
                let mut v = to_f64(c);
                let mut g = vec![0.0; x.len()];
                for (&o, t) in own.iter().zip(targets) {
                    let r = x[o] - t.eval(x);
                    v -= r * r;
                    g[o] -= 2.0 * r;
                    t.add_grad(x, 2.0 * r, &mut g);
                }
                Ok((v, g))
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_grad(x)?.0)
    }

    fn validate(&self, k: usize) -> Result<()> {
        match self {
            Utility::Poly(p) => crate::error::check_dim(k, p.dim()),
            Utility::Circuit(c) => {
                crate::error::check_dim(k, c.num_inputs())?;
                if c.num_outputs() == 0 {
                    return Err(Error::InvalidCircuit("utility circuit has no outputs".into()));
                }
                Ok(())
            }
            Utility::Tracking { own, targets, .. } => {
                if own.len() != targets.len() {
                    return Err(Error::InvalidInput("tracking utility needs one target per own variable".into()));
                }
                for t in targets {
                    for v in t.vars() {
                        if v >= k {
                            return Err(Error::InvalidInput(format!("target variable {v} out of range 0..{k}")));
                        }
                        if own.contains(&v) {
                            return Err(Error::InvalidInput(format!("target reads own variable {v}")));
                        }
                    }
                }
                if own.iter().any(|&o| o >= k) {
                    return Err(Error::InvalidInput(format!("own variable out of range 0..{k}")));
                }
                Ok(())
            }
        }
    }

    /// Bound on the gradient norm restricted to `block` over `[−B, B]^k`.
    pub fn own_lipschitz(&self, block: &Range<usize>, big_b: f64, circuit_l: f64) -> f64 {
        match self {
            Utility::Poly(p) => {
                let mut per = vec![0.0; block.len()];
                for (e, c) in p.terms() {
                    let deg: u32 = e.iter().sum();
                    let cf = to_f64(c).abs();
                    for (slot, j) in per.iter_mut().zip(block.clone()) {
                        if e[j] > 0 {
                            *slot += cf * e[j] as f64 * big_b.powi(deg as i32 - 1);
                        }
                    }
                }
                norm2(&per)
            }
            Utility::Circuit(_) => circuit_l,
            Utility::Tracking { own, targets, .. } => {
                let per: Vec<f64> = own
                    .iter()
                    .zip(targets)
                    .filter(|(o, _)| block.contains(o))
                    .map(|(_, t)| 2.0 * (big_b + t.bound(big_b)))
                    .collect();
                norm2(&per)
            }
        }
    }

    /// Exact monomial form. Tracking utilities with clamp targets of degree
    /// above `degree_cap` are refused.
    pub fn expand(&self, k: usize, degree_cap: usize) -> Result<Polynomial> {
        match self {
            Utility::Poly(p) => Ok(p.clone()),
            Utility::Circuit(_) => Err(Error::InvalidInput("circuit utilities have no monomial form".into())),
            Utility::Tracking { c, own, targets } => {
                let mut out = Polynomial::constant(k, c.clone());
                for (&o, t) in own.iter().zip(targets) {
                    let tp = match t {
                        Target::Const(v) => Polynomial::constant(k, v.clone()),
                        Target::Var(j) => Polynomial::var(k, *j),
                        Target::Clamp { a, b, shift, poly } => {
                            if poly.degree() > degree_cap {
                                return Err(Error::OverflowBudget { degree: poly.degree(), cap: degree_cap });
                            }
                            let arg = Polynomial::var(k, *a).sub(&Polynomial::var(k, *b));
                            poly.p.compose1(&arg)?.add(&Polynomial::constant(k, shift.clone()))
                        }
                    };
                    let r = Polynomial::var(k, o).sub(&tp);
                    out = out.sub(&r.mul(&r));
                }
                Ok(out)
            }
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Utility::Poly(p) => json!({"poly": p.to_json()}),
            Utility::Circuit(c) => json!({"circuit": c.to_json()}),
            Utility::Tracking { c, own, targets } => json!({"tracking": {
                "c": format_rational(c),
                "own": own,
                "targets": targets.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
            }}),
        }
    }

    fn from_json(j: &J, cache: &mut HashMap<String, Arc<ClampPoly>>) -> Result<Self> {
        if let Some(p) = j.opt("poly") {
            return Ok(Utility::Poly(Polynomial::from_json(&p)?));
        }
        if let Some(c) = j.opt("circuit") {
            return Ok(Utility::Circuit(LinCircuit::from_json(&c)?));
        }
        if let Some(t) = j.opt("tracking") {
            let own = t.field("own")?.items()?.iter().map(|v| v.as_usize()).collect::<Result<_>>()?;
            let targets = t.field("targets")?.items()?.iter().map(|v| Target::from_json(v, cache)).collect::<Result<_>>()?;
            return Ok(Utility::Tracking { c: t.field("c")?.as_rational()?, own, targets });
        }
        Err(j.err("utility needs one of \"poly\", \"circuit\", \"tracking\""))
    }
}

/// Player `i` controls the coordinates `partition[i]` of `x ∈ [−1,1]^k`;
/// all players share the constraint `S`.
#[derive(Debug, Clone)]
pub struct ConcaveGame {
    pub partition: Vec<Range<usize>>,
    pub utilities: Vec<Utility>,
    pub constraint: WellBounded,
    pub l: f64,
    pub eps: f64,
    pub eta: f64,
    /// Claimed strong-concavity parameter, audited by
    /// [`detect_concavity_violation`].
    pub mu: Option<f64>,
}

fn check_partition(partition: &[Range<usize>]) -> Result<usize> {
    let mut next = 0;
    for r in partition {
        if r.start != next || r.end <= r.start {
            return Err(Error::InvalidInput(format!("partition block {r:?} does not continue at {next}")));
        }
        next = r.end;
    }
    if next == 0 {
        return Err(Error::InvalidInput("a game needs at least one player".into()));
    }
    Ok(next)
}

fn partition_json(p: &[Range<usize>]) -> Value {
    Value::Array(p.iter().map(|r| json!([r.start, r.end])).collect())
}

fn partition_from_json(j: &J) -> Result<Vec<Range<usize>>> {
    j.items()?
        .iter()
        .map(|b| {
            let v = b.items()?;
            if v.len() != 2 {
                return Err(b.err("block must be [lo, hi)"));
            }
            Ok(v[0].as_usize()?..v[1].as_usize()?)
        })
        .collect()
}

fn utilities_from_json(j: &J) -> Result<Vec<Utility>> {
    let mut cache = HashMap::new();
    j.items()?.iter().map(|u| Utility::from_json(u, &mut cache)).collect()
}

impl ConcaveGame {
    pub fn new(
        partition: Vec<Range<usize>>,
        utilities: Vec<Utility>,
        constraint: WellBounded,
        l: f64,
        eps: f64,
        eta: f64,
    ) -> Result<Self> {
        let k = check_partition(&partition)?;
        if utilities.len() != partition.len() {
            return Err(Error::DimensionMismatch { expected: partition.len(), got: utilities.len() });
        }
        for u in &utilities {
            u.validate(k)?;
        }
        crate::error::check_dim(k, constraint.body.dim())?;
        if !(eps > 0.0 && eta > 0.0) {
            return Err(Error::InvalidInput(format!("need ε, η > 0, got ε={eps}, η={eta}")));
        }
        let origin = vec![0.0; k];
        if !constraint.body.weak_sep(&origin, 1e-9)?.is_inside() {
            return Err(Error::InvalidInput("the constraint set must contain 0".into()));
        }
        Ok(ConcaveGame { partition, utilities, constraint, l, eps, eta, mu: None })
    }

    pub fn n(&self) -> usize {
        self.partition.len()
    }

    pub fn k(&self) -> usize {
        self.partition.last().map_or(0, |r| r.end)
    }

    /// `G_i` over `S_η ⊆ [−1−η, 1+η]^k`.
    pub fn player_lipschitz(&self, i: usize) -> f64 {
        self.utilities[i].own_lipschitz(&self.partition[i], 1.0 + self.eta, self.l)
    }

    /// `G = Σ_i G_i + 2γk`.
    pub fn phi_lipschitz(&self, gamma: f64) -> f64 {
        (0..self.n()).map(|i| self.player_lipschitz(i)).sum::<f64>() + 2.0 * gamma * self.k() as f64
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "n": self.n(),
            "partition": partition_json(&self.partition),
            "utilities": self.utilities.iter().map(|u| u.to_json()).collect::<Vec<_>>(),
            "constraint": self.constraint.to_json(),
            "L": s(self.l),
            "epsilon": s(self.eps),
            "eta": s(self.eta),
        });
        if let Some(mu) = self.mu {
            v["mu"] = s(mu);
        }
        v
    }

    /// Reads a concave game; a document without `"constraint"` is read as a
    /// strongly concave game and lifted.
    pub fn from_json(j: &J) -> Result<Self> {
        if j.opt("constraint").is_none() {
            return Ok(lift_strongly_concave(&StronglyConcaveGame::from_json(j)?));
        }
        let partition = partition_from_json(&j.field("partition")?)?;
        let n = j.field("n")?.as_usize()?;
        if n != partition.len() {
            return Err(j.field("n")?.err(&format!("partition has {} blocks", partition.len())));
        }
        let utilities = utilities_from_json(&j.field("utilities")?)?;
        let constraint = WellBounded::from_json(&j.field("constraint")?)?;
        let mut g = ConcaveGame::new(
            partition,
            utilities,
            constraint,
            j.field("L")?.as_scalar()?,
            j.field("epsilon")?.as_scalar()?,
            j.field("eta")?.as_scalar()?,
        )
        .map_err(|e| j.err(&e.to_string()))?;
        g.mu = match j.opt("mu") {
            Some(m) => Some(m.as_scalar()?),
            None => None,
        };
        Ok(g)
    }
}

/// A game on `S = [−1,1]^k` whose utilities are `μ`-strongly concave in the
/// player's own block.
#[derive(Debug, Clone)]
pub struct StronglyConcaveGame {
    pub partition: Vec<Range<usize>>,
    pub utilities: Vec<Utility>,
    pub mu: f64,
    pub l: f64,
    pub eps: f64,
}

impl StronglyConcaveGame {
    pub fn new(partition: Vec<Range<usize>>, utilities: Vec<Utility>, mu: f64, l: f64, eps: f64) -> Result<Self> {
        let k = check_partition(&partition)?;
        if utilities.len() != partition.len() {
            return Err(Error::DimensionMismatch { expected: partition.len(), got: utilities.len() });
        }
        for u in &utilities {
            if matches!(u, Utility::Circuit(_)) {
                return Err(Error::InvalidInput("strongly concave games take polynomial utilities".into()));
            }
            u.validate(k)?;
        }
        if !(mu > 0.0 && eps > 0.0 && l > 0.0) {
            return Err(Error::InvalidInput(format!("need μ, ε, L > 0, got μ={mu}, ε={eps}, L={l}")));
        }
        Ok(StronglyConcaveGame { partition, utilities, mu, l, eps })
    }

    pub fn k(&self) -> usize {
        self.partition.last().map_or(0, |r| r.end)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.partition.len(),
            "partition": partition_json(&self.partition),
            "utilities": self.utilities.iter().map(|u| u.to_json()).collect::<Vec<_>>(),
            "mu": s(self.mu),
            "L": s(self.l),
            "epsilon": s(self.eps),
        })
    }

    pub fn from_json(j: &J) -> Result<Self> {
        let partition = partition_from_json(&j.field("partition")?)?;
        let utilities = utilities_from_json(&j.field("utilities")?)?;
        StronglyConcaveGame::new(
            partition,
            utilities,
            j.field("mu")?.as_scalar()?,
            j.field("L")?.as_scalar()?,
            j.field("epsilon")?.as_scalar()?,
        )
        .map_err(|e| j.err(&e.to_string()))
    }
}

/// The same game as a [`ConcaveGame`] on `Box[−1,1]^k` with `η = ε/(4kL)`.
pub fn lift_strongly_concave(g: &StronglyConcaveGame) -> ConcaveGame {
    let k = g.k();
    let constraint =
        WellBounded::new(BodySpec::cube(k, -1.0, 1.0), 1.0, (k as f64).sqrt()).with_center(vec![0.0; k]);
    ConcaveGame {
        partition: g.partition.clone(),
        utilities: g.utilities.clone(),
        constraint,
        l: g.l,
        eps: g.eps,
        eta: g.eps / (4.0 * k as f64 * g.l),
        mu: Some(g.mu),
    }
}

fn splice(x: &[f64], block: &Range<usize>, yi: &[f64]) -> Vec<f64> {
    let mut z = x.to_vec();
    z[block.clone()].copy_from_slice(yi);
    z
}

/// `φ(x, y) = Σ_i u_i(y_i, x_{−i}) − γ‖y‖²` and its gradient in `y`.
pub fn phi(game: &ConcaveGame, gamma: f64, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    crate::error::check_dim(game.k(), x.len())?;
    crate::error::check_dim(game.k(), y.len())?;
    let mut v = -gamma * dot(y, y);
    let mut g: Vec<f64> = y.iter().map(|t| -2.0 * gamma * t).collect();
    for (block, u) in game.partition.iter().zip(&game.utilities) {
        let (ui, gi) = u.value_grad(&splice(x, block, &y[block.clone()]))?;
        v += ui;
        for j in block.clone() {
            g[j] += gi[j];
        }
    }
    Ok((v, g))
}

#[derive(Debug, Clone)]
pub enum BestResponse {
    Body(WellBounded),
    Empty(EmptinessCert),
}

/// `F̃(x) = S_η ∩ {y : φ(x, y) ≥ φ(x, y_sol) − ε/2}`, where `y_sol`
/// maximizes `φ(x, ·)` over `S` to tolerance `δ = min{ε, η}/2`. Then
/// `φ(x, y_sol) ≥ max_{S_{−η}} φ(x, ·) − ε/2`, so `F̃(x) ⊆ F(x)` and `F̃(x)`
/// keeps an inner ball of radius `min{η/2, ε/(2G)}`.
pub fn best_response_body(game: &ConcaveGame, gamma: f64, x: &[f64]) -> Result<BestResponse> {
    let k = game.k();
    let delta = game.eps.min(game.eta) / 2.0;
    let neg = |y: &[f64]| -> (f64, Vec<f64>) {
        match phi(game, gamma, x, y) {
            Ok((v, g)) => (-v, g.into_iter().map(|t| -t).collect()),
            Err(_) => (f64::NAN, vec![f64::NAN; y.len()]),
        }
    };
    let s_body = &game.constraint;
    let strong = s_body.body.has_strong_oracle();
    let top = match minimize_over(&neg, s_body, strong, delta, delta, delta)? {
        OptimizeResult::Minimizer { value, .. } => -value,
        OptimizeResult::Empty { cert } => return Ok(BestResponse::Empty(cert)),
    };
    let level = top - game.eps / 2.0;
    let g = Arc::new(game.clone());
    let xs = x.to_vec();
    let f = FnConvex::shared(k, move |y: &[f64]| match phi(&g, gamma, &xs, y) {
        Ok((v, gr)) => (-v, gr.into_iter().map(|t| -t).collect()),
        Err(_) => (f64::NAN, vec![f64::NAN; y.len()]),
    });
    let body = BodySpec::Intersection(vec![
        s_body.body.parallel_body(game.eta)?,
        BodySpec::LevelSet { f, threshold: -level },
    ]);
    let r = (game.eta / 2.0).min(game.eps / (2.0 * game.phi_lipschitz(gamma)));
    Ok(BestResponse::Body(WellBounded {
        body,
        r,
        big_r: s_body.big_r + game.eta,
        center: Some(s_body.outer_center()),
    }))
}

/// Per-player regrets of `x` against the slices of `S_{−η}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub x: Vec<f64>,
    pub per_player_regret: Vec<f64>,
    /// `x ∈ S_η`.
    pub feasible: bool,
    /// The slice `{y_i : (y_i, x_{−i}) ∈ S_{−η}}` is empty; its regret is 0.
    pub empty_slice: Vec<bool>,
    pub eps: f64,
    pub eta: f64,
}

impl EquilibriumReport {
    pub fn max_regret(&self) -> f64 {
        self.per_player_regret.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "x": sv(&self.x),
            "per_player_regret": sv(&self.per_player_regret),
            "max_regret": s(self.max_regret()),
            "feasible": self.feasible,
            "empty_slice": self.empty_slice,
            "epsilon": s(self.eps),
            "eta": s(self.eta),
        })
    }
}

const CHECK_DELTA: f64 = 1e-9;

/// Regret of every player at `x`, maximizing `u_i(·, x_{−i})` over the slice
/// of `S_{−η}` with the ellipsoid method.
pub fn check_equilibrium(game: &ConcaveGame, x: &[f64], eps: f64, eta: f64) -> Result<EquilibriumReport> {
    crate::error::check_dim(game.k(), x.len())?;
    let s_body = &game.constraint.body;
    let strong = s_body.has_strong_oracle();
    let member = |b: &BodySpec, z: &[f64]| -> Result<bool> {
        Ok(if strong { b.strong_sep(z)? } else { b.weak_sep(z, CHECK_DELTA)? }.is_inside())
    };
    let feasible = member(&s_body.parallel_body(eta)?, x)?;
    let inner = match s_body.parallel_body(-eta) {
        Ok(b) => Some(b),
        Err(Error::EmptyShrink { .. }) => None,
        Err(e) => return Err(e),
    };
    let c = game.constraint.outer_center();
    let mut regrets = Vec::with_capacity(game.n());
    let mut empty = Vec::with_capacity(game.n());
    for (block, u) in game.partition.iter().zip(&game.utilities) {
        let here = u.value(x)?;
        let Some(inner) = &inner else {
            regrets.push(0.0);
            empty.push(true);
            continue;
        };
        let sep = |yi: &[f64]| -> Result<SeparationResult> {
            let z = splice(x, block, yi);
            let r = if strong { inner.strong_sep(&z)? } else { inner.weak_sep(&z, CHECK_DELTA)? };
            Ok(match r {
                SeparationResult::Inside => SeparationResult::Inside,
                SeparationResult::Separated(h) => {
                    let mut n = h.normal[block.clone()].to_vec();
                    // A cut that ignores the block means the slice is empty;
                    // any direction is then valid.
                    if norm2(&n) <= 1e-12 * norm2(&h.normal).max(1e-300) {
                        n = vec![0.0; block.len()];
                        n[0] = 1.0;
                    }
                    SeparationResult::Separated(crate::bodies::Hyperplane { normal: n, anchor: yi.to_vec() })
                }
            })
        };
        let f = |yi: &[f64]| -> (f64, Vec<f64>) {
            match u.value_grad(&splice(x, block, yi)) {
                Ok((v, g)) => (-v, g[block.clone()].iter().map(|t| -t).collect()),
                Err(_) => (f64::NAN, vec![f64::NAN; yi.len()]),
            }
        };
        let bounds = Bounds { center: c[block.clone()].to_vec(), radius: game.constraint.big_r };
        let res = if strong { scco(&f, &sep, &bounds, 1e-7, 1e-9)? } else { wcco(&f, &sep, &bounds, 1e-7, 1e-9)? };
        match res {
            OptimizeResult::Minimizer { value, .. } => {
                let mut best = -value;
                if member(inner, x)? {
                    best = best.max(here);
                }
                regrets.push(best - here);
                empty.push(false);
            }
            OptimizeResult::Empty { .. } => {
                regrets.push(0.0);
                empty.push(true);
            }
        }
    }
    Ok(EquilibriumReport { x: x.to_vec(), per_player_regret: regrets, feasible, empty_slice: empty, eps, eta })
}

#[derive(Debug, Clone)]
pub enum GameCertificate {
    /// `|u_i(x) − u_i(y)| > L‖x − y‖`.
    LipschitzViolation { i: usize, x: Vec<f64>, y: Vec<f64>, ux: f64, uy: f64, l: f64 },
    /// `u_i(λx_i + (1−λ)y_i, x_{−i}) < λu_i(x_i, x_{−i}) + (1−λ)u_i(y_i, x_{−i})`.
    ConcavityViolation { i: usize, x: Vec<f64>, y_i: Vec<f64>, lambda: f64, lhs: f64, rhs: f64 },
    /// As above with `+ μλ(1−λ)/2·‖x_i − y_i‖²` on the right.
    StrongConcavityViolation { i: usize, x: Vec<f64>, y_i: Vec<f64>, lambda: f64, mu: f64, lhs: f64, rhs: f64 },
    AlmostEmptiness { x: Vec<f64>, cert: EmptinessCert },
    /// The best-response correspondence failed the double-projection test
    /// between `p` and `q`; `eps` is the projection accuracy in the
    /// solver's `u = (x + 1)/2` chart.
    BestResponseLipschitz { p: Vec<f64>, q: Vec<f64>, eps: f64, lhs: f64, rhs: f64 },
}

/// `(lhs, rhs)` of the midpoint inequality with strengthening `mu`.
fn midpoint(game: &ConcaveGame, i: usize, x: &[f64], yi: &[f64], lambda: f64, mu: f64) -> Result<(f64, f64)> {
    let block = &game.partition[i];
    let u = &game.utilities[i];
    let xi = &x[block.clone()];
    let mid: Vec<f64> = xi.iter().zip(yi).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
    let lhs = u.value(&splice(x, block, &mid))?;
    let rhs = lambda * u.value(x)?
        + (1.0 - lambda) * u.value(&splice(x, block, yi))?
        + mu * lambda * (1.0 - lambda) / 2.0 * dist(xi, yi).powi(2);
    Ok((lhs, rhs))
}

fn violated(lhs: f64, rhs: f64) -> bool {
    lhs < rhs - 1e-9 * (1.0 + lhs.abs().max(rhs.abs()))
}

impl GameCertificate {
    pub fn tag(&self) -> &'static str {
        match self {
            GameCertificate::LipschitzViolation { .. } => "lipschitz_violation",
            GameCertificate::ConcavityViolation { .. } => "concavity_violation",
            GameCertificate::StrongConcavityViolation { .. } => "strong_concavity_violation",
            GameCertificate::AlmostEmptiness { .. } => "almost_emptiness",
            GameCertificate::BestResponseLipschitz { .. } => "best_response_lipschitz",
        }
    }

    /// Re-evaluates the defining inequality; true when it is still violated.
    pub fn replay(&self, game: &ConcaveGame) -> Result<bool> {
        Ok(match self {
            GameCertificate::LipschitzViolation { i, x, y, l, .. } => {
                let u = &game.utilities[*i];
                (u.value(x)? - u.value(y)?).abs() > l * dist(x, y)
            }
            GameCertificate::ConcavityViolation { i, x, y_i, lambda, .. } => {
                let (l, r) = midpoint(game, *i, x, y_i, *lambda, 0.0)?;
                violated(l, r)
            }
            GameCertificate::StrongConcavityViolation { i, x, y_i, lambda, mu, .. } => {
                let (l, r) = midpoint(game, *i, x, y_i, *lambda, *mu)?;
                violated(l, r)
            }
            GameCertificate::AlmostEmptiness { x, cert } => cert.holds() && replay_emptiness_at(game, x)?,
            GameCertificate::BestResponseLipschitz { p, q, eps, .. } => {
                let f = best_response_correspondence(game, game.eps / game.k() as f64);
                let to_u = |v: &[f64]| -> Vec<f64> { v.iter().map(|t| (t + 1.0) / 2.0).collect() };
                let cert = KakutaniOutcome::LipschitzCert {
                    p: to_u(p),
                    q: to_u(q),
                    z: Vec::new(),
                    w: Vec::new(),
                    eps: *eps,
                    lhs: 0.0,
                    rhs: 0.0,
                };
                replay_lipschitz_cert(&f, &cert)?
            }
        })
    }

    pub fn to_json(&self) -> Value {
        let mut v = match self {
            GameCertificate::LipschitzViolation { i, x, y, ux, uy, l } => {
                json!({"i": i, "x": sv(x), "y": sv(y), "ux": s(*ux), "uy": s(*uy), "L": s(*l)})
            }
            GameCertificate::ConcavityViolation { i, x, y_i, lambda, lhs, rhs } => json!({
                "i": i, "x": sv(x), "y_i": sv(y_i), "lambda": s(*lambda), "lhs": s(*lhs), "rhs": s(*rhs),
            }),
            GameCertificate::StrongConcavityViolation { i, x, y_i, lambda, mu, lhs, rhs } => json!({
                "i": i, "x": sv(x), "y_i": sv(y_i), "lambda": s(*lambda), "mu": s(*mu), "lhs": s(*lhs), "rhs": s(*rhs),
            }),
            GameCertificate::AlmostEmptiness { x, cert } => json!({"x": sv(x), "cert": cert.to_json()}),
            GameCertificate::BestResponseLipschitz { p, q, eps, lhs, rhs } => {
                json!({"p": sv(p), "q": sv(q), "epsilon": s(*eps), "lhs": s(*lhs), "rhs": s(*rhs)})
            }
        };
        v["type"] = json!(self.tag());
        v
    }

    pub fn from_json(j: &J) -> Result<Self> {
        let vec = |k: &str| j.field(k)?.as_vec();
        let sc = |k: &str| j.field(k)?.as_scalar();
        let idx = || j.field("i")?.as_usize();
        Ok(match j.field("type")?.as_str()? {
            "lipschitz_violation" => GameCertificate::LipschitzViolation {
                i: idx()?,
                x: vec("x")?,
                y: vec("y")?,
                ux: sc("ux")?,
                uy: sc("uy")?,
                l: sc("L")?,
            },
            "concavity_violation" => GameCertificate::ConcavityViolation {
                i: idx()?,
                x: vec("x")?,
                y_i: vec("y_i")?,
                lambda: sc("lambda")?,
                lhs: sc("lhs")?,
                rhs: sc("rhs")?,
            },
            "strong_concavity_violation" => GameCertificate::StrongConcavityViolation {
                i: idx()?,
                x: vec("x")?,
                y_i: vec("y_i")?,
                lambda: sc("lambda")?,
                mu: sc("mu")?,
                lhs: sc("lhs")?,
                rhs: sc("rhs")?,
            },
            "best_response_lipschitz" => GameCertificate::BestResponseLipschitz {
                p: vec("p")?,
                q: vec("q")?,
                eps: sc("epsilon")?,
                lhs: sc("lhs")?,
                rhs: sc("rhs")?,
            },
            other => return Err(j.field("type")?.err(&format!("certificate type {other:?} cannot be replayed from JSON"))),
        })
    }
}

/// Re-runs the best-response oracle at `x` with `γ = ε/k`: true when the
/// value is again certified almost empty.
pub fn replay_emptiness_at(game: &ConcaveGame, x: &[f64]) -> Result<bool> {
    Ok(match best_response_body(game, game.eps / game.k() as f64, x)? {
        BestResponse::Empty(c) => c.holds(),
        BestResponse::Body(_) => false,
    })
}

fn sample_cube(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Samples `(x, y_i, λ)` in `[−1,1]^k` and tests the (strong) midpoint
/// inequality; even trials use `λ = 1/2`. Finding nothing proves nothing.
pub fn detect_concavity_violation(game: &ConcaveGame, trials: usize, seed: u64) -> Result<Option<GameCertificate>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = game.mu.unwrap_or(0.0);
    for t in 0..trials.max(1) {
        let i = t % game.n();
        let x = sample_cube(&mut rng, game.k());
        let yi = sample_cube(&mut rng, game.partition[i].len());
        let lambda = if t % 2 == 0 { 0.5 } else { rng.gen_range(0.05..0.95) };
        let (lhs, rhs) = midpoint(game, i, &x, &yi, lambda, 0.0)?;
        if violated(lhs, rhs) {
            return Ok(Some(GameCertificate::ConcavityViolation { i, x, y_i: yi, lambda, lhs, rhs }));
        }
        if mu > 0.0 {
            let (lhs, rhs) = midpoint(game, i, &x, &yi, lambda, mu)?;
            if violated(lhs, rhs) {
                return Ok(Some(GameCertificate::StrongConcavityViolation { i, x, y_i: yi, lambda, mu, lhs, rhs }));
            }
        }
    }
    Ok(None)
}

/// Samples pairs in `[−1,1]^k` and tests `|u_i(x) − u_i(y)| ≤ L‖x − y‖`.
pub fn detect_lipschitz_violation(game: &ConcaveGame, trials: usize, seed: u64) -> Result<Option<GameCertificate>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials.max(1) {
        let i = t % game.n();
        let x = sample_cube(&mut rng, game.k());
        let y = sample_cube(&mut rng, game.k());
        let (ux, uy) = (game.utilities[i].value(&x)?, game.utilities[i].value(&y)?);
        if (ux - uy).abs() > game.l * dist(&x, &y) {
            return Ok(Some(GameCertificate::LipschitzViolation { i, x, y, ux, uy, l: game.l }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone)]
pub struct GameSolveOptions {
    pub kakutani: SolveOptions,
    /// Stop at the first panchromatic vertex whose regrets are all within
    /// `3ε`.
    pub early_accept: bool,
    /// Times `α` is halved when a fixed point misses the `3ε` regret bound.
    pub retries: usize,
    /// Overrides `α = ε/G`.
    pub alpha: Option<f64>,
}

impl Default for GameSolveOptions {
    fn default() -> Self {
        GameSolveOptions { kakutani: SolveOptions::default(), early_accept: true, retries: 3, alpha: None }
    }
}

#[derive(Debug, Clone)]
pub struct GameSolveInfo {
    pub gamma: f64,
    pub g: f64,
    pub alpha: f64,
    pub kakutani_outcome: &'static str,
    pub attempts: usize,
    pub stats: Option<SolveStats>,
}

impl GameSolveInfo {
    pub fn to_json(&self) -> Value {
        json!({
            "gamma": s(self.gamma),
            "G": s(self.g),
            "alpha": s(self.alpha),
            "kakutani_outcome": self.kakutani_outcome,
            "attempts": self.attempts,
            "kakutani": self.stats.as_ref().map(|st| st.to_json()),
        })
    }
}

#[derive(Debug, Clone)]
pub enum GameOutcome {
    Equilibrium(EquilibriumReport),
    Certificate(GameCertificate),
}

/// The best-response correspondence on `u ∈ [0,1]^k`, `x = 2u − 1`.
pub fn best_response_correspondence(game: &ConcaveGame, gamma: f64) -> Correspondence {
    let k = game.k();
    let g_phi = game.phi_lipschitz(gamma);
    let r = (game.eta / 2.0).min(game.eps / (2.0 * g_phi));
    let kappa = 2.0 * (2.0 * g_phi / gamma).sqrt();
    let cond = Conditioning { eta: r / 2.0, l: kappa / 2f64.sqrt(), holder_q: 0.5 };
    let game = Arc::new(game.clone());
    Correspondence::new(k, Mode::WeakSep, cond, move |u: &[f64]| {
        let x: Vec<f64> = u.iter().map(|t| 2.0 * t - 1.0).collect();
        match best_response_body(&game, gamma, &x)? {
            BestResponse::Body(b) => Ok(WellBounded {
                body: BodySpec::Scaled { base: Box::new(b.body), factor: 0.5, offset: vec![0.5; k] },
                r: b.r / 2.0,
                big_r: b.big_r / 2.0,
                center: b.center.map(|c| c.iter().map(|t| 0.5 * t + 0.5).collect()),
            }),
            // An empty value: the projection reports it through the oracle.
            BestResponse::Empty(_) => Ok(WellBounded::new(
                BodySpec::Intersection(vec![BodySpec::cube(k, 0.0, 0.0), BodySpec::cube(k, 1.0, 1.0)]),
                r / 2.0,
                1.0,
            )),
        }
    })
}

/// `γ = ε/k`, `α = ε/G` and a Kakutani solve of the best-response map;
/// the result is checked against the `3ε` regret bound.
pub fn solve_equilibrium(game: &ConcaveGame, opts: &GameSolveOptions) -> Result<(GameOutcome, GameSolveInfo)> {
    let k = game.k();
    let gamma = game.eps / k as f64;
    let g_phi = game.phi_lipschitz(gamma);
    let mut alpha = opts.alpha.unwrap_or(game.eps / g_phi);
    let f = best_response_correspondence(game, gamma);
    let bound = 3.0 * game.eps;
    let last: Mutex<Option<EquilibriumReport>> = Mutex::new(None);
    let accept = |u: &[f64], _: &[f64]| -> Result<bool> {
        if !opts.early_accept {
            return Ok(false);
        }
        let x: Vec<f64> = u.iter().map(|t| 2.0 * t - 1.0).collect();
        let rep = check_equilibrium(game, &x, game.eps, game.eta)?;
        let ok = rep.feasible && rep.max_regret() <= bound && !rep.empty_slice.contains(&true);
        *last.lock().unwrap() = Some(rep);
        Ok(ok)
    };
    let mut info = GameSolveInfo { gamma, g: g_phi, alpha, kakutani_outcome: "", attempts: 0, stats: None };
    loop {
        info.attempts += 1;
        info.alpha = alpha;
        // α is measured in x = 2u − 1 coordinates.
        let (out, stats) = solve_accepting(&f, (alpha / 2.0).min(0.99), &opts.kakutani, &accept)?;
        info.kakutani_outcome = out.tag();
        info.stats = Some(stats);
        let to_x = |v: &[f64]| -> Vec<f64> { v.iter().map(|t| 2.0 * t - 1.0).collect() };
        match out {
            KakutaniOutcome::Accepted { .. } => {
                let rep = last.lock().unwrap().take().expect("accepted vertex was checked");
                return Ok((GameOutcome::Equilibrium(rep), info));
            }
            KakutaniOutcome::FixedPoint { x, .. } => {
                let rep = check_equilibrium(game, &to_x(&x), game.eps, game.eta)?;
                if rep.max_regret() <= bound || info.attempts > opts.retries {
                    return Ok((GameOutcome::Equilibrium(rep), info));
                }
                alpha /= 2.0;
            }
            KakutaniOutcome::EmptyCert { x, cert } => {
                return Ok((GameOutcome::Certificate(GameCertificate::AlmostEmptiness { x: to_x(&x), cert }), info))
            }
            KakutaniOutcome::LipschitzCert { p, q, eps, lhs, rhs, .. } => {
                let cert =
                    GameCertificate::BestResponseLipschitz { p: to_x(&p), q: to_x(&q), eps, lhs: 2.0 * lhs, rhs: 2.0 * rhs };
                return Ok((GameOutcome::Certificate(cert), info));
            }
        }
    }
}

//! Pure exchange economies: budget polytopes, the regularized demand and
//! price correspondences, their joint fixed-point reduction and
//! approximate Walrasian-equilibrium checks.
//!
//! Prices live on `Δ_ξ = {p ≥ ξ, Σ p = 1}`. Price bodies are expressed in
//! the chart `q = (p_1, …, p_{d−1})`, where `Δ_ξ` is the full-dimensional
//! polytope `{q ≥ ξ, Σ q ≤ 1 − ξ}`.

use crate::bodies::{exact_project, hausdorff_distance, BodySpec, FnConvex, WellBounded};
use crate::ellipsoid::{minimize_over, OptimizeResult};
use crate::json::{s, sv, J};
use crate::kakutani::{solve_accepting, Conditioning, Correspondence, KakutaniOutcome, Mode, SolveOptions, SolveStats};
use crate::numerics::linalg::{dist, dot, norm2, Matrix};
use crate::numerics::Polynomial;
use crate::{Error, Result};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub const DEFAULT_SIGMA: f64 = 0.05;

/// A concave increasing utility on `R^d_+`.
#[derive(Debug, Clone)]
pub enum MarketUtility {
    /// `Σ_k a_k ln(σ + x_k)`, extended linearly below `x_k = −σ/2` so that
    /// oracle queries slightly outside the orthant stay finite.
    ShiftedLog { a: Vec<f64>, sigma: f64 },
    Polynomial(Polynomial),
}

fn ln_ext(t: f64, sigma: f64) -> (f64, f64) {
    let knee = sigma / 2.0;
    if t >= knee {
        (t.ln(), 1.0 / t)
    } else {
        (knee.ln() + (t - knee) / knee, 1.0 / knee)
    }
}

impl MarketUtility {
    pub fn shifted_log(a: Vec<f64>) -> Self {
        MarketUtility::ShiftedLog { a, sigma: DEFAULT_SIGMA }
    }

    pub fn dim(&self) -> usize {
        match self {
            MarketUtility::ShiftedLog { a, .. } => a.len(),
            MarketUtility::Polynomial(p) => p.dim(),
        }
    }

    pub fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        crate::error::check_dim(self.dim(), x.len())?;
        match self {
            MarketUtility::ShiftedLog { a, sigma } => {
                let mut v = 0.0;
                let mut g = Vec::with_capacity(a.len());
                for (ak, xk) in a.iter().zip(x) {
                    let (l, dl) = ln_ext(sigma + xk, *sigma);
                    v += ak * l;
                    g.push(ak * dl);
                }
                Ok((v, g))
            }
            MarketUtility::Polynomial(p) => Ok((p.eval(x)?, p.grad(x)?)),
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_grad(x)?.0)
    }

    /// Lipschitz bound over `[0, B]^d`.
    pub fn lipschitz(&self, big_b: f64) -> f64 {
        match self {
            MarketUtility::ShiftedLog { a, sigma } => norm2(a) / sigma,
            MarketUtility::Polynomial(p) => {
                let mut g = vec![0.0; p.dim()];
                for (e, c) in p.terms() {
                    let c = crate::numerics::rational::to_f64(c).abs();
                    let deg: u32 = e.iter().sum();
                    for (j, &ej) in e.iter().enumerate() {
                        if ej > 0 {
                            g[j] += c * ej as f64 * big_b.max(1.0).powi(deg as i32 - 1);
                        }
                    }
                }
                norm2(&g)
            }
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        crate::error::check_dim(d, self.dim())?;
        if let MarketUtility::ShiftedLog { a, sigma } = self {
            if !(*sigma > 0.0) || a.iter().any(|t| !(*t >= 0.0)) || a.iter().all(|t| *t == 0.0) {
                return Err(Error::InvalidInput("shifted-log utility needs σ > 0 and nonnegative, nonzero weights".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExchangeEconomy {
    pub endowments: Vec<Vec<f64>>,
    pub utilities: Vec<MarketUtility>,
    pub xi: f64,
    pub eps: f64,
    pub gamma: f64,
    /// Lipschitz constant of every utility over its budget region.
    pub l: f64,
}

impl ExchangeEconomy {
    /// `γ` defaults to `ε`; `L` is computed from the utilities over the
    /// boxes `[0, d‖e_i‖/ξ]^d`.
    pub fn new(
        endowments: Vec<Vec<f64>>,
        utilities: Vec<MarketUtility>,
        xi: f64,
        eps: f64,
        gamma: Option<f64>,
    ) -> Result<Self> {
        let n = endowments.len();
        if n == 0 || utilities.len() != n {
            return Err(Error::InvalidInput("need one utility per agent and at least one agent".into()));
        }
        let d = endowments[0].len();
        if d < 2 {
            return Err(Error::InvalidInput("need at least two goods".into()));
        }
        for e in &endowments {
            crate::error::check_dim(d, e.len())?;
            if e.iter().any(|t| !(*t > 0.0)) {
                return Err(Error::InvalidInput("endowments must be positive in every good".into()));
            }
        }
        for u in &utilities {
            u.validate(d)?;
        }
        if !(xi > 0.0 && xi * (d as f64) < 1.0) {
            return Err(Error::InvalidInput("ξ must lie in (0, 1/d)".into()));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidInput("ε must be positive".into()));
        }
        let gamma = gamma.unwrap_or(eps);
        if !(gamma > 0.0) {
            return Err(Error::InvalidInput("γ must be positive".into()));
        }
        let mut econ = ExchangeEconomy { endowments, utilities, xi, eps, gamma, l: 0.0 };
        econ.l = (0..n).map(|i| econ.utilities[i].lipschitz(econ.box_bound(i))).fold(0.0, f64::max);
        Ok(econ)
    }

    pub fn n(&self) -> usize {
        self.endowments.len()
    }

    pub fn d(&self) -> usize {
        self.endowments[0].len()
    }

    /// `d‖e_i‖/ξ`, a bound on `‖x‖` over every budget set of agent `i`.
    pub fn box_bound(&self, i: usize) -> f64 {
        self.d() as f64 * norm2(&self.endowments[i]) / self.xi
    }

    pub fn total_endowment(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.d()];
        for e in &self.endowments {
            for (tk, ek) in t.iter_mut().zip(e) {
                *tk += ek;
            }
        }
        t
    }

    /// `L_ũ = L + γd‖e_i‖/ξ`, maximized over agents.
    pub fn regularized_lipschitz(&self) -> f64 {
        (0..self.n()).map(|i| self.l + self.gamma * self.box_bound(i)).fold(0.0, f64::max)
    }

    /// `L_w = γ + 2γ(d/ξ)Σ‖e_i‖`.
    pub fn price_lipschitz(&self) -> f64 {
        let total: f64 = self.endowments.iter().map(|e| norm2(e)).sum();
        self.gamma + 2.0 * self.gamma * self.d() as f64 / self.xi * total
    }

    /// `α = ε / max{L_ũ(√d/ξ + 1), L_w}`.
    pub fn default_alpha(&self) -> f64 {
        let d = self.d() as f64;
        self.eps / (self.regularized_lipschitz() * (d.sqrt() / self.xi + 1.0)).max(self.price_lipschitz())
    }

    /// The upper end of the regularization window: `γ·max_i (d‖e_i‖/ξ)²`
    /// must dominate `ε`.
    pub fn gamma_window_ok(&self) -> bool {
        (0..self.n()).all(|i| self.gamma * self.box_bound(i).powi(2) >= self.eps)
    }

    /// Two agents, two goods, `e_i = (1, 1)` and `u_i = ½ln(σ+x_1) + ½ln(σ+x_2)`.
    pub fn symmetric(eps: f64) -> Self {
        let u = MarketUtility::shifted_log(vec![0.5, 0.5]);
        ExchangeEconomy::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![u.clone(), u], eps * eps, eps, None)
            .expect("valid fixture")
    }

    /// [`ExchangeEconomy::symmetric`] with endowments `(2, ½)` and `(½, 2)`.
    pub fn asymmetric(eps: f64) -> Self {
        let u = MarketUtility::shifted_log(vec![0.5, 0.5]);
        ExchangeEconomy::new(vec![vec![2.0, 0.5], vec![0.5, 2.0]], vec![u.clone(), u], eps * eps, eps, None)
            .expect("valid fixture")
    }

    pub fn to_json(&self) -> Value {
        let utility = if self.utilities.iter().all(|u| matches!(u, MarketUtility::ShiftedLog { .. })) {
            let sigma = match &self.utilities[0] {
                MarketUtility::ShiftedLog { sigma, .. } => *sigma,
                MarketUtility::Polynomial(_) => unreachable!(),
            };
            let params: Vec<Value> = self
                .utilities
                .iter()
                .map(|u| match u {
                    MarketUtility::ShiftedLog { a, .. } => sv(a),
                    MarketUtility::Polynomial(_) => unreachable!(),
                })
                .collect();
            json!({"family": "shifted_log", "sigma": s(sigma), "params": params})
        } else {
            let monomials: Vec<Value> = self
                .utilities
                .iter()
                .map(|u| match u {
                    MarketUtility::Polynomial(p) => p.to_json(),
                    MarketUtility::ShiftedLog { .. } => Value::Null,
                })
                .collect();
            json!({"family": "polynomial", "monomials": monomials})
        };
        json!({
            "n": self.n(),
            "d": self.d(),
            "endowments": self.endowments.iter().map(|e| sv(e)).collect::<Vec<_>>(),
            "utility": utility,
            "xi": s(self.xi),
            "epsilon": s(self.eps),
            "gamma": s(self.gamma),
        })
    }

    /// Parses the economy document; `xi` defaults to `ε²` and `gamma` to `ε`.
    pub fn from_json(j: &J) -> Result<Self> {
        let n = j.field("n")?.as_usize()?;
        let d = j.field("d")?.as_usize()?;
        let ej = j.field("endowments")?;
        let endowments = ej.as_matrix()?;
        if endowments.len() != n || endowments.iter().any(|e| e.len() != d) {
            return Err(ej.err(&format!("expected {n} endowment vectors of length {d}")));
        }
        for (row, e) in ej.items()?.iter().zip(&endowments) {
            if let Some(k) = e.iter().position(|t| !(*t > 0.0)) {
                return Err(row.items()?[k].err("endowments must be positive"));
            }
        }
        let uj = j.field("utility")?;
        let fj = uj.field("family")?;
        let utilities = match fj.as_str()? {
            "shifted_log" => {
                let sigma = uj.scalar_or("sigma", DEFAULT_SIGMA)?;
                let pj = uj.field("params")?;
                let rows = pj.as_matrix()?;
                if rows.len() != n {
                    return Err(pj.err(&format!("expected {n} weight vectors")));
                }
                rows.into_iter().map(|a| MarketUtility::ShiftedLog { a, sigma }).collect()
            }
            "polynomial" => {
                let mj = uj.field("monomials")?;
                let items = mj.items()?;
                if items.len() != n {
                    return Err(mj.err(&format!("expected {n} polynomials")));
                }
                items.iter().map(|p| Polynomial::from_json(p).map(MarketUtility::Polynomial)).collect::<Result<Vec<_>>>()?
            }
            _ => return Err(fj.err("family must be shifted_log or polynomial")),
        };
        let eps = j.field("epsilon")?.as_scalar()?;
        let xi = j.scalar_or("xi", eps * eps)?;
        let gamma = j.opt("gamma").map(|g| g.as_scalar()).transpose()?;
        ExchangeEconomy::new(endowments, utilities, xi, eps, gamma).map_err(|e| match e {
            Error::InvalidInput(m) | Error::Schema { msg: m, .. } => j.err(&m),
            Error::DimensionMismatch { expected, got } => {
                j.err(&format!("utility dimension mismatch: expected {expected}, got {got}"))
            }
            e => e,
        })
    }
}

fn check_price(econ: &ExchangeEconomy, p: &[f64]) -> Result<()> {
    crate::error::check_dim(econ.d(), p.len())?;
    let tol = 1e-9;
    if p.iter().any(|t| *t < econ.xi - tol) || (p.iter().sum::<f64>() - 1.0).abs() > tol {
        return Err(Error::InvalidInput("price must lie in Δ_ξ".into()));
    }
    Ok(())
}

/// Euclidean projection onto `Δ_ξ`.
pub fn project_prices(xi: f64, y: &[f64]) -> Vec<f64> {
    exact_project(&BodySpec::SimplexXi { dim: y.len(), xi }, y).expect("simplex projection is exact")
}

/// `(q, 1 − Σ q)`.
pub fn lift_price(q: &[f64]) -> Vec<f64> {
    let mut p = q.to_vec();
    p.push(1.0 - q.iter().sum::<f64>());
    p
}

/// `B̃_i(p) = {x ≥ 0 : p·x ≤ p·e_i − α/n}` with the largest inner ball
/// centered on the diagonal. The outer radius is the farthest vertex, which
/// never exceeds `d‖e_i‖/ξ`.
pub fn budget_body(econ: &ExchangeEconomy, i: usize, p: &[f64], alpha: f64) -> Result<WellBounded> {
    check_price(econ, p)?;
    let d = econ.d();
    let shift = alpha / econ.n() as f64;
    let wealth = dot(p, &econ.endowments[i]);
    if wealth <= shift {
        return Err(Error::EmptyBudget { wealth, shift });
    }
    let top = wealth - shift;
    let mut rows: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut r = vec![0.0; d];
            r[k] = -1.0;
            r
        })
        .collect();
    rows.push(p.to_vec());
    let mut b = vec![0.0; d];
    b.push(top);
    let r = top / (p.iter().sum::<f64>() + norm2(p));
    // The farthest point is a vertex `(top/p_k)·e_k`.
    let far = top / p.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(WellBounded::new(BodySpec::Polytope { a: Matrix::from_rows(&rows), b }, r, far.min(econ.box_bound(i)))
        .with_center(vec![r; d]))
}

/// `ũ_i(x) = u_i(x) − γ‖x‖²`.
pub fn regularized_utility(econ: &ExchangeEconomy, i: usize, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (v, mut g) = econ.utilities[i].value_grad(x)?;
    for (gk, xk) in g.iter_mut().zip(x) {
        *gk -= 2.0 * econ.gamma * xk;
    }
    Ok((v - econ.gamma * dot(x, x), g))
}

/// A level-set body `{z ∈ C : value(z) ≥ level}` around an approximate
/// maximizer `sol` of a strongly concave objective over `C`.
#[derive(Debug, Clone)]
pub struct LevelBody {
    pub body: WellBounded,
    pub sol: Vec<f64>,
    pub level: f64,
}

fn neg_of(v: Result<(f64, Vec<f64>)>, dim: usize) -> (f64, Vec<f64>) {
    match v {
        Ok((v, g)) => (-v, g.into_iter().map(|t| -t).collect()),
        Err(_) => (f64::NAN, vec![f64::NAN; dim]),
    }
}

/// Maximizes `obj` over `c` to accuracy `ε/4` and returns
/// `c ∩ {obj ≥ obj(sol) − ε/2}`, so every member is within `ε` of the
/// maximum. The inner ball sits on the segment from `sol` to the inner
/// center of `c`, where both constraints hold with room `L·t‖c − sol‖`.
fn level_body<F>(c: WellBounded, obj: F, lipschitz: f64, eps: f64) -> Result<LevelBody>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Send + Sync + 'static,
{
    let dim = c.body.dim();
    let neg = |z: &[f64]| neg_of(obj(z), dim);
    let delta = eps / 4.0;
    let (sol, top) = match minimize_over(&neg, &c, true, delta, c.r / 2.0, delta)? {
        OptimizeResult::Minimizer { z, value } => (z, -value),
        OptimizeResult::Empty { .. } => {
            return Err(Error::InvalidInput("constraint set reported empty despite its inner ball".into()))
        }
    };
    let level = top - eps / 2.0;
    let center = c.outer_center();
    let reach = dist(&center, &sol) + c.r;
    let t = (eps / (2.0 * lipschitz * reach)).min(1.0);
    let inner = t * c.r;
    let body = BodySpec::Intersection(vec![
        c.body.clone(),
        BodySpec::LevelSet { f: FnConvex::shared(dim, move |z: &[f64]| neg_of(obj(z), z.len())), threshold: -level },
    ]);
    let wb = WellBounded { body, r: inner, big_r: c.big_r, center: c.center.clone() };
    Ok(LevelBody { body: wb, sol, level })
}

/// `Ψ̃_i^D(p) = B̃_i(p) ∩ {ũ_i ≥ ũ_i(x_sol) − ε/2}`.
pub fn demand_body(econ: &ExchangeEconomy, i: usize, p: &[f64], alpha: f64) -> Result<LevelBody> {
    let budget = budget_body(econ, i, p, alpha)?;
    let e = Arc::new(econ.clone());
    let l = econ.l + 2.0 * econ.gamma * econ.box_bound(i);
    level_body(budget, move |x: &[f64]| regularized_utility(&e, i, x), l, econ.eps)
}

/// The price polytope `{q ≥ ξ, Σ q ≤ 1 − ξ}` in chart coordinates.
fn price_polytope(econ: &ExchangeEconomy) -> WellBounded {
    let (d, xi) = (econ.d(), econ.xi);
    let m = d - 1;
    let mut rows: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            let mut r = vec![0.0; m];
            r[k] = -1.0;
            r
        })
        .collect();
    rows.push(vec![1.0; m]);
    let mut b = vec![-xi; m];
    b.push(1.0 - xi);
    let r = (1.0 - d as f64 * xi) / (m as f64 + (m as f64).sqrt());
    WellBounded::new(BodySpec::Polytope { a: Matrix::from_rows(&rows), b }, r, (m as f64).sqrt())
        .with_center(vec![xi + r; m])
}

/// `w(p) = p·(x_sum − Σ e_i) − γ‖p‖²`.
pub fn price_objective(econ: &ExchangeEconomy, x_sum: &[f64], p: &[f64]) -> (f64, Vec<f64>) {
    let excess: Vec<f64> = x_sum.iter().zip(econ.total_endowment()).map(|(a, b)| a - b).collect();
    let v = dot(p, &excess) - econ.gamma * dot(p, p);
    let g = excess.iter().zip(p).map(|(e, pk)| e - 2.0 * econ.gamma * pk).collect();
    (v, g)
}

/// `Ψ̃^P(x) = {p ∈ Δ_ξ : w(p) ≥ w(p_sol) − ε/2}` in chart coordinates; `sol`
/// is the chart point of `p_sol`.
pub fn price_body(econ: &ExchangeEconomy, x_sum: &[f64]) -> Result<LevelBody> {
    crate::error::check_dim(econ.d(), x_sum.len())?;
    let d = econ.d();
    let e = Arc::new(econ.clone());
    let xs = x_sum.to_vec();
    let obj = move |q: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, g) = price_objective(&e, &xs, &lift_price(q));
        Ok((v, (0..d - 1).map(|k| g[k] - g[d - 1]).collect()))
    };
    let excess = dist(x_sum, &econ.total_endowment());
    let l = 2f64.sqrt() * (excess + 2.0 * econ.gamma);
    level_body(price_polytope(econ), obj, l, econ.eps)
}

/// The complete information vector `(x_1, …, x_n, s)` with `s = Σ x_i`:
/// every block in its demand set, the coupling rows `s = Σ x_i`, and the
/// halfspace `Q^{ε′} = {s ≥ (1 − ε′)Σ e_i}`. The coupling is an equality,
/// so this body has no interior; it serves membership queries.
pub fn aggregate_demand_body(econ: &ExchangeEconomy, p: &[f64], alpha: f64, eps_prime: f64) -> Result<BodySpec> {
    let (n, d) = (econ.n(), econ.d());
    let mut parts = Vec::with_capacity(n + 1);
    let mut bound = 0.0;
    for i in 0..n {
        parts.push(demand_body(econ, i, p, alpha)?.body.body);
        bound += econ.box_bound(i);
    }
    parts.push(BodySpec::cube(d, 0.0, bound));
    let dim = (n + 1) * d;
    let total = econ.total_endowment();
    let mut rows = Vec::new();
    let mut b = Vec::new();
    for k in 0..d {
        let mut r = vec![0.0; dim];
        for i in 0..n {
            r[i * d + k] = 1.0;
        }
        r[n * d + k] = -1.0;
        rows.push(r.clone());
        b.push(0.0);
        rows.push(r.iter().map(|t| -t).collect());
        b.push(0.0);
        let mut q = vec![0.0; dim];
        q[n * d + k] = -1.0;
        rows.push(q);
        b.push(-(1.0 - eps_prime) * total[k]);
    }
    Ok(BodySpec::Intersection(vec![BodySpec::Product(parts), BodySpec::Polytope { a: Matrix::from_rows(&rows), b }]))
}

/// `(min_{v ≥ 0, ‖v‖ = 1} p·v)^{−1} = 1/min_k p_k` for the single budget
/// row, together with the bound `√d/ξ`.
pub fn hoffman_bound(p: &[f64], xi: f64) -> (f64, f64) {
    let m = p.iter().cloned().fold(f64::INFINITY, f64::min);
    (1.0 / m, (p.len() as f64).sqrt() / xi)
}

/// Hausdorff distance between the unshifted budget sets of agent `i` at two
/// prices, with the Lipschitz bound `(d^{3/2}/ξ²)‖e_i‖‖p_1 − p_2‖`.
pub fn budget_hausdorff(econ: &ExchangeEconomy, i: usize, p1: &[f64], p2: &[f64]) -> Result<(f64, f64)> {
    let a = budget_body(econ, i, p1, 0.0)?;
    let b = budget_body(econ, i, p2, 0.0)?;
    let h = hausdorff_distance(&a.body, &b.body, 256)?;
    let d = econ.d() as f64;
    Ok((h.value, d.powf(1.5) / (econ.xi * econ.xi) * norm2(&econ.endowments[i]) * dist(p1, p2)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalrasOutcome {
    pub p: Vec<f64>,
    pub allocations: Vec<Vec<f64>>,
    /// `Σ x_i − Σ e_i`.
    pub clearance_residual: Vec<f64>,
    pub per_agent_regret: Vec<f64>,
    /// `x_i ∈ B_i(p)`.
    pub feasible: Vec<bool>,
    /// `Σ x_i ∈ [1 − ε, 1 + ε]·Σ e_i` componentwise.
    pub almost_clear: bool,
    pub eps: f64,
}

impl WalrasOutcome {
    pub fn max_regret(&self) -> f64 {
        self.per_agent_regret.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_clearance(&self) -> f64 {
        self.clearance_residual.iter().map(|t| t.abs()).fold(0.0, f64::max)
    }

    /// Regret `≤ 4ε`, clearance `≤ 3ε` per good, every bundle affordable.
    pub fn passes(&self) -> bool {
        self.feasible.iter().all(|f| *f) && self.max_regret() <= 4.0 * self.eps && self.max_clearance() <= 3.0 * self.eps
    }

    pub fn to_json(&self) -> Value {
        json!({
            "p": sv(&self.p),
            "allocations": self.allocations.iter().map(|x| sv(x)).collect::<Vec<_>>(),
            "clearance_residual": sv(&self.clearance_residual),
            "per_agent_regret": sv(&self.per_agent_regret),
            "max_regret": s(self.max_regret()),
            "feasible": self.feasible,
            "almost_clear": self.almost_clear,
            "epsilon": s(self.eps),
            "passes": self.passes(),
        })
    }
}

const FEAS_TOL: f64 = 1e-9;

/// Regrets against the exact budget sets `B_i(p)`, the clearance residual
/// and the multiplicative clearing band.
pub fn check_walras(econ: &ExchangeEconomy, p: &[f64], allocations: &[Vec<f64>], eps: f64) -> Result<WalrasOutcome> {
    check_price(econ, p)?;
    if allocations.len() != econ.n() {
        return Err(Error::InvalidInput(format!("expected {} allocations", econ.n())));
    }
    let d = econ.d();
    let mut regrets = Vec::with_capacity(econ.n());
    let mut feasible = Vec::with_capacity(econ.n());
    for (i, x) in allocations.iter().enumerate() {
        crate::error::check_dim(d, x.len())?;
        let wealth = dot(p, &econ.endowments[i]);
        feasible.push(x.iter().all(|t| *t >= -FEAS_TOL) && dot(p, x) <= wealth * (1.0 + FEAS_TOL) + FEAS_TOL);
        let budget = budget_body(econ, i, p, 0.0)?;
        let u = &econ.utilities[i];
        let f = |z: &[f64]| neg_of(u.value_grad(z), d);
        let best = match minimize_over(&f, &budget, true, 1e-9, budget.r / 2.0, 1e-7)? {
            OptimizeResult::Minimizer { value, .. } => -value,
            OptimizeResult::Empty { .. } => f64::NEG_INFINITY,
        };
        let here = u.value(x)?;
        let best = if feasible[i] { best.max(here) } else { best };
        regrets.push(best - here);
    }
    let total = econ.total_endowment();
    let mut sum = vec![0.0; d];
    for x in allocations {
        for (sk, xk) in sum.iter_mut().zip(x) {
            *sk += xk;
        }
    }
    let residual: Vec<f64> = sum.iter().zip(&total).map(|(a, b)| a - b).collect();
    let almost_clear = sum.iter().zip(&total).all(|(a, b)| *a >= (1.0 - eps) * b && *a <= (1.0 + eps) * b);
    Ok(WalrasOutcome {
        p: p.to_vec(),
        allocations: allocations.to_vec(),
        clearance_residual: residual,
        per_agent_regret: regrets,
        feasible,
        almost_clear,
        eps,
    })
}

/// Test vectors `p̂_k`: `1 − ξ` on good `k` and `ξ/(d − 1)` elsewhere.
pub fn test_vectors(d: usize, xi: f64) -> Vec<Vec<f64>> {
    (0..d)
        .map(|k| (0..d).map(|j| if j == k { 1.0 - xi } else { xi / (d - 1) as f64 }).collect())
        .collect()
}

/// How allocation blocks are mapped into the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocationScale {
    /// `x_i = (d‖e_i‖/ξ)·u_i`, which covers every budget set.
    BudgetBound,
    /// `x_i = c·max_k(Σ_j e_j)_k·u_i`. Demands beyond the cap are clipped by
    /// the cube; for `c > 1` no fixed point sits on the cap, since the price
    /// player answers such excess demand by raising that price.
    EndowmentMultiple(f64),
}

/// The joint search variable `z = (u_1, …, u_n, q)`: allocation blocks
/// `x_i = B_i·u_i`, and prices `p = Π_{Δ_ξ}(q, 1 − Σq)`.
#[derive(Debug, Clone)]
pub struct JointChart {
    pub scales: Vec<f64>,
    pub d: usize,
    pub xi: f64,
}

impl JointChart {
    pub fn new(econ: &ExchangeEconomy, scale: AllocationScale) -> Self {
        let scales = match scale {
            AllocationScale::BudgetBound => (0..econ.n()).map(|i| econ.box_bound(i)).collect(),
            AllocationScale::EndowmentMultiple(c) => {
                vec![c * econ.total_endowment().iter().cloned().fold(0.0, f64::max); econ.n()]
            }
        };
        JointChart { scales, d: econ.d(), xi: econ.xi }
    }

    pub fn dim(&self) -> usize {
        self.scales.len() * self.d + self.d - 1
    }

    pub fn allocations(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let d = self.d;
        self.scales.iter().enumerate().map(|(i, b)| z[i * d..(i + 1) * d].iter().map(|t| b * t).collect()).collect()
    }

    pub fn prices(&self, z: &[f64]) -> Vec<f64> {
        let q = &z[self.scales.len() * self.d..];
        project_prices(self.xi, &lift_price(q))
    }
}

struct Memo<T> {
    map: Mutex<HashMap<Vec<u64>, T>>,
}

impl<T> Default for Memo<T> {
    fn default() -> Self {
        Memo { map: Mutex::new(HashMap::new()) }
    }
}

impl<T: Clone> Memo<T> {
    const CAPACITY: usize = 1 << 16;

    fn get_or(&self, key: &[f64], make: impl FnOnce() -> Result<T>) -> Result<T> {
        let k: Vec<u64> = key.iter().map(|t| t.to_bits()).collect();
        if let Some(v) = self.map.lock().unwrap().get(&k) {
            return Ok(v.clone());
        }
        let v = make()?;
        let mut m = self.map.lock().unwrap();
        if m.len() >= Self::CAPACITY {
            m.clear();
        }
        m.insert(k, v.clone());
        Ok(v)
    }
}

/// A lower bound on the inner radius of every value of the joint map, from
/// `p·e_i ≥ min_k e_ik` and the level-body construction.
fn inner_radius_floor(econ: &ExchangeEconomy, alpha: f64) -> f64 {
    let d = econ.d() as f64;
    let mut r = f64::INFINITY;
    let mut excess = norm2(&econ.total_endowment());
    for i in 0..econ.n() {
        let b = econ.box_bound(i);
        let wealth = econ.endowments[i].iter().cloned().fold(f64::INFINITY, f64::min) - alpha / econ.n() as f64;
        let rb = wealth / (1.0 + d.sqrt());
        let l = econ.l + 2.0 * econ.gamma * b;
        let t = (econ.eps / (2.0 * l * 2.0 * b)).min(1.0);
        r = r.min(t * rb / b);
        excess += b;
    }
    let pr = price_polytope(econ);
    let l = 2f64.sqrt() * (excess + 2.0 * econ.gamma);
    let t = (econ.eps / (2.0 * l * 2.0 * pr.big_r)).min(1.0);
    r.min(t * pr.r)
}

/// `F(z) = (Ψ̃_1^D(p), …, Ψ̃_n^D(p), Ψ̃^P(Σ x_i))` on `[0,1]^{nd+d−1}`.
/// Allocation `α` is the budget shift; the halfspace `Q^{ε′}` is left to the
/// checker.
pub fn walras_correspondence(econ: &ExchangeEconomy, alpha: f64, scale: AllocationScale) -> Correspondence {
    let chart = JointChart::new(econ, scale);
    let (n, d) = (econ.n(), econ.d());
    let dim = chart.dim();
    let bmax = chart.scales.iter().cloned().fold(1.0, f64::max);
    let bmin = chart.scales.iter().cloned().fold(1.0, f64::min);
    let d_f = d as f64;
    let k_sum: f64 = (0..n)
        .map(|i| {
            let lip = d_f.powf(1.5) / (econ.xi * econ.xi) * norm2(&econ.endowments[i]);
            let lu = econ.l + econ.gamma * econ.box_bound(i);
            lip + 2.0 * (4.0 / (2.0 * econ.gamma) * lu).sqrt() * (1.0 + lip).sqrt()
        })
        .sum();
    let lambda = (8.0 * (1.0 + 2.0 * d_f / econ.xi * econ.endowments.iter().map(|e| norm2(e)).sum::<f64>())).sqrt();
    let cond = Conditioning { eta: inner_radius_floor(econ, alpha) / 2.0, l: (k_sum + lambda) * bmax.sqrt() / bmin, holder_q: 0.5 };
    let econ = Arc::new(econ.clone());
    // Grid vertices share prices and allocation sums, so the bodies are
    // memoized on them.
    let demand_cache: Memo<Vec<WellBounded>> = Memo::default();
    let price_cache: Memo<WellBounded> = Memo::default();
    Correspondence::new(dim, Mode::StrongSep, cond, move |z: &[f64]| {
        let p = chart.prices(z);
        let xs = chart.allocations(z);
        let demands = demand_cache.get_or(&p, || (0..n).map(|i| Ok(demand_body(&econ, i, &p, alpha)?.body)).collect())?;
        let mut parts = Vec::with_capacity(n + 1);
        let mut r = f64::INFINITY;
        let mut big_r2 = 0.0;
        let mut center = Vec::with_capacity(dim);
        for (lb, b) in demands.into_iter().zip(&chart.scales) {
            r = r.min(lb.r / b);
            big_r2 += (lb.big_r / b).powi(2);
            center.extend(lb.outer_center().iter().map(|t| t / b));
            parts.push(BodySpec::Scaled { base: Box::new(lb.body), factor: 1.0 / b, offset: vec![0.0; d] });
        }
        let mut x_sum = vec![0.0; d];
        for x in &xs {
            for (sk, xk) in x_sum.iter_mut().zip(x) {
                *sk += xk;
            }
        }
        let pb = price_cache.get_or(&x_sum, || Ok(price_body(&econ, &x_sum)?.body))?;
        r = r.min(pb.r);
        big_r2 += pb.big_r.powi(2);
        center.extend(pb.outer_center());
        parts.push(pb.body);
        Ok(WellBounded { body: BodySpec::Product(parts), r, big_r: big_r2.sqrt(), center: Some(center) })
    })
}

#[derive(Debug, Clone)]
pub struct WalrasSolveOptions {
    pub kakutani: SolveOptions,
    /// Accept the first panchromatic vertex whose projection is within
    /// `tau` of it and passes [`check_walras`].
    pub early_accept: bool,
    /// Accuracy of the demand and price bodies; defaults to `ε/256`. The
    /// outcome is always checked at the economy's `ε`.
    pub inner_eps: Option<f64>,
    /// Fixed-point residual for early acceptance, in allocation and price
    /// units; defaults to `ε/4`.
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub scale: AllocationScale,
}

impl Default for WalrasSolveOptions {
    fn default() -> Self {
        WalrasSolveOptions {
            kakutani: SolveOptions::default(),
            early_accept: true,
            inner_eps: None,
            tau: None,
            alpha: None,
            scale: AllocationScale::EndowmentMultiple(2.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WalrasSolveInfo {
    pub alpha: f64,
    pub inner_eps: f64,
    pub tau: f64,
    pub gamma: f64,
    pub xi: f64,
    pub gamma_window_ok: bool,
    pub kakutani_outcome: &'static str,
    pub stats: Option<SolveStats>,
}

impl WalrasSolveInfo {
    pub fn to_json(&self) -> Value {
        json!({
            "alpha": s(self.alpha),
            "inner_epsilon": s(self.inner_eps),
            "tau": s(self.tau),
            "gamma": s(self.gamma),
            "xi": s(self.xi),
            "gamma_window_ok": self.gamma_window_ok,
            "kakutani_outcome": self.kakutani_outcome,
            "stats": self.stats.as_ref().map(|s| s.to_json()),
        })
    }
}

#[derive(Debug, Clone)]
pub enum WalrasResult {
    Equilibrium(WalrasOutcome),
    Certificate(KakutaniOutcome),
}

/// The correspondence [`solve_walras`] runs with `opts`; certificates in its
/// outcome replay against it.
pub fn solver_correspondence(econ: &ExchangeEconomy, opts: &WalrasSolveOptions) -> Correspondence {
    let mut inner = econ.clone();
    inner.eps = opts.inner_eps.unwrap_or(econ.eps / 256.0);
    let alpha = opts.alpha.unwrap_or_else(|| inner.default_alpha());
    walras_correspondence(&inner, alpha, opts.scale)
}

/// Kakutani solve of the joint correspondence; the extracted point is
/// checked against `4ε` regret and `3ε` clearance.
pub fn solve_walras(econ: &ExchangeEconomy, opts: &WalrasSolveOptions) -> Result<(WalrasResult, WalrasSolveInfo)> {
    let mut inner = econ.clone();
    inner.eps = opts.inner_eps.unwrap_or(econ.eps / 256.0);
    let alpha = opts.alpha.unwrap_or_else(|| inner.default_alpha());
    let tau = opts.tau.unwrap_or(econ.eps / 4.0);
    let chart = JointChart::new(econ, opts.scale);
    let f = solver_correspondence(econ, opts);
    // Prices come from the vertex, allocations from its projection, which
    // lies in the demand sets at those prices.
    let extract = |x: &[f64], z: &[f64]| -> Result<WalrasOutcome> {
        check_walras(econ, &chart.prices(x), &chart.allocations(z), econ.eps)
    };
    let residual = |x: &[f64], z: &[f64]| -> f64 {
        let (ax, az) = (chart.allocations(x), chart.allocations(z));
        let mut r2 = dist(&chart.prices(x), &chart.prices(z)).powi(2);
        for (a, b) in ax.iter().zip(&az) {
            r2 += dist(a, b).powi(2);
        }
        r2.sqrt()
    };
    let last: Mutex<Option<WalrasOutcome>> = Mutex::new(None);
    let accept = |x: &[f64], z: &[f64]| -> Result<bool> {
        if !opts.early_accept || residual(x, z) > tau {
            return Ok(false);
        }
        let out = extract(x, z)?;
        let ok = out.passes();
        *last.lock().unwrap() = Some(out);
        Ok(ok)
    };
    // α bounds the allocation residual; in chart units it shrinks by the
    // largest box scale.
    let bmax = chart.scales.iter().cloned().fold(1.0, f64::max);
    let alpha_z = (alpha / bmax).min(0.99);
    let (out, stats) = solve_accepting(&f, alpha_z, &opts.kakutani, &accept)?;
    let mut info = WalrasSolveInfo {
        alpha,
        inner_eps: inner.eps,
        tau,
        gamma: econ.gamma,
        xi: econ.xi,
        gamma_window_ok: econ.gamma_window_ok(),
        kakutani_outcome: out.tag(),
        stats: Some(stats),
    };
    let res = match out {
        KakutaniOutcome::Accepted { .. } => {
            WalrasResult::Equilibrium(last.lock().unwrap().take().expect("accepted vertex was checked"))
        }
        KakutaniOutcome::FixedPoint { x, z, .. } => WalrasResult::Equilibrium(extract(&x, &z)?),
        cert => WalrasResult::Certificate(cert),
    };
    info.kakutani_outcome = match &res {
        WalrasResult::Equilibrium(_) => info.kakutani_outcome,
        WalrasResult::Certificate(c) => c.tag(),
    };
    Ok((res, info))
}

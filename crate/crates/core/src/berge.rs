//! Numerical audits of the robust maximum theorem on parametric problems
//! `f*(a) = max_{b ∈ g(a)} f(a, b)`: Lipschitz value functions and
//! ½-Hölder argmax maps under strong concavity.

use crate::bodies::{BodySpec, WellBounded};
use crate::ellipsoid::{minimize_over, OptimizeResult};
use crate::json::{s, sv, J};
use crate::numerics::linalg::dist;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::sync::Arc;

pub type Objective = Arc<dyn Fn(&[f64], &[f64]) -> (f64, Vec<f64>) + Send + Sync>;
pub type Constraint = Arc<dyn Fn(&[f64]) -> Result<WellBounded> + Send + Sync>;

/// `f(a, ·)` is `μ`-strongly concave, `f` is `L`-Lipschitz on the parameter
/// box times the constraint range and `g` is `L′`-Hausdorff Lipschitz.
#[derive(Clone)]
pub struct ParametricProblem {
    pub name: String,
    /// Value and gradient in `b`.
    pub f: Objective,
    pub g: Constraint,
    pub param_lo: Vec<f64>,
    pub param_hi: Vec<f64>,
    pub l: f64,
    pub l_prime: f64,
    pub mu: f64,
}

impl std::fmt::Debug for ParametricProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametricProblem")
            .field("name", &self.name)
            .field("param_lo", &self.param_lo)
            .field("param_hi", &self.param_hi)
            .field("l", &self.l)
            .field("l_prime", &self.l_prime)
            .field("mu", &self.mu)
            .finish()
    }
}

impl ParametricProblem {
    pub fn k(&self) -> usize {
        self.param_lo.len()
    }

    /// `f(a, b) = −‖b − a‖²` over the unit ball, `a ∈ [−P, P]^k`:
    /// `g*(a)` is the projection of `a`. `μ = 2`, `L′ = 0` and
    /// `L = 2√2(1 + P√k)` bounds `‖∇_{(a,b)} f‖`.
    pub fn projection(k: usize, p: f64) -> Self {
        let ball = WellBounded::new(BodySpec::ball(vec![0.0; k], 1.0), 1.0, 1.0).with_center(vec![0.0; k]);
        ParametricProblem {
            name: "projection".into(),
            f: Arc::new(|a: &[f64], b: &[f64]| {
                let r: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
                (-r.iter().map(|t| t * t).sum::<f64>(), r.iter().map(|t| -2.0 * t).collect())
            }),
            g: Arc::new(move |_| Ok(ball.clone())),
            param_lo: vec![-p; k],
            param_hi: vec![p; k],
            l: 2.0 * 2f64.sqrt() * (1.0 + p * (k as f64).sqrt()),
            l_prime: 0.0,
            mu: 2.0,
        }
    }

    /// `f(a, b) = −‖b‖²` over the box `[a, a + 1]`, `a ∈ [−P, P]^k`:
    /// `g*(a) = clamp(0, a, a + 1)`. `μ = 2`, `L′ = 1` (translates) and
    /// `L = 2(P + 1)√k`.
    pub fn moving_box(k: usize, p: f64) -> Self {
        ParametricProblem {
            name: "moving_box".into(),
            f: Arc::new(|_a: &[f64], b: &[f64]| {
                (-b.iter().map(|t| t * t).sum::<f64>(), b.iter().map(|t| -2.0 * t).collect())
            }),
            g: Arc::new(move |a: &[f64]| {
                let hi: Vec<f64> = a.iter().map(|t| t + 1.0).collect();
                let c: Vec<f64> = a.iter().map(|t| t + 0.5).collect();
                Ok(WellBounded::new(BodySpec::Box { lo: a.to_vec(), hi }, 0.5, 0.5 * (a.len() as f64).sqrt())
                    .with_center(c))
            }),
            param_lo: vec![-p; k],
            param_hi: vec![p; k],
            l: 2.0 * (p + 1.0) * (k as f64).sqrt(),
            l_prime: 1.0,
            mu: 2.0,
        }
    }

    /// Fixture by name: `projection` or `moving_box`.
    pub fn fixture(name: &str, k: usize, p: f64) -> Result<Self> {
        match name {
            "projection" => Ok(Self::projection(k, p)),
            "moving_box" => Ok(Self::moving_box(k, p)),
            _ => Err(Error::InvalidInput(format!("unknown parametric family {name:?}"))),
        }
    }

    /// `L + L·L′`.
    pub fn value_lipschitz(&self) -> f64 {
        self.l + self.l * self.l_prime
    }

    /// `κ = L′ + 2√(4/μ)·√(L + L·L′)`.
    pub fn kappa(&self) -> f64 {
        self.l_prime + 2.0 * (4.0 / self.mu).sqrt() * self.value_lipschitz().sqrt()
    }

    fn in_box(&self, a: &[f64]) -> bool {
        a.len() == self.k() && a.iter().zip(self.param_lo.iter().zip(&self.param_hi)).all(|(t, (l, h))| *t >= *l && *t <= *h)
    }
}

/// `(f*(a), g*(a))` by the ellipsoid method at tolerance `δ_b`:
/// `f(a, g*) ≥ f*(a) − δ_b`. The inner run uses `δ_b/(1 + L)` since its
/// guarantee is against the body shrunk by its own tolerance.
pub fn value_and_argmax(prob: &ParametricProblem, a: &[f64], delta_b: f64) -> Result<(f64, Vec<f64>)> {
    if !prob.in_box(a) {
        return Err(Error::InvalidInput("parameter outside the fixture box".into()));
    }
    let body = (prob.g)(a)?;
    let f = |b: &[f64]| {
        let (v, g) = (prob.f)(a, b);
        (-v, g.into_iter().map(|t| -t).collect())
    };
    let strong = body.body.has_strong_oracle();
    let tol = delta_b / (1.0 + prob.l);
    match minimize_over(&f, &body, strong, tol, body.r / 2.0, tol)? {
        OptimizeResult::Minimizer { z, value } => Ok((-value, z)),
        OptimizeResult::Empty { .. } => Err(Error::InvalidInput("constraint set reported empty".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub param_dist: f64,
    pub argmax_dist: f64,
    pub value_gap: f64,
    /// `‖g*(a1) − g*(a2)‖ / ‖a1 − a2‖^{1/2}`; 0 for identical parameters.
    pub ratio: f64,
    pub holder_ok: bool,
    pub value_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderReport {
    pub problem: String,
    pub kappa: f64,
    /// `4√(δ_b/μ)`.
    pub argmax_slack: f64,
    pub value_lipschitz: f64,
    /// `2δ_b`.
    pub value_slack: f64,
    pub delta_b: f64,
    pub max_ratio: f64,
    pub pairs: Vec<PairRecord>,
}

impl HolderReport {
    pub fn holder_ok(&self) -> bool {
        self.pairs.iter().all(|p| p.holder_ok)
    }

    pub fn value_ok(&self) -> bool {
        self.pairs.iter().all(|p| p.value_ok)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "problem": self.problem,
            "kappa": s(self.kappa),
            "argmax_slack": s(self.argmax_slack),
            "value_lipschitz": s(self.value_lipschitz),
            "value_slack": s(self.value_slack),
            "delta_b": s(self.delta_b),
            "max_ratio": s(self.max_ratio),
            "holder_ok": self.holder_ok(),
            "value_ok": self.value_ok(),
            "pairs": self.pairs.iter().map(|p| json!({
                "a1": sv(&p.a1),
                "a2": sv(&p.a2),
                "param_dist": s(p.param_dist),
                "argmax_dist": s(p.argmax_dist),
                "value_gap": s(p.value_gap),
                "ratio": s(p.ratio),
                "holder_ok": p.holder_ok,
                "value_ok": p.value_ok,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Checks `‖g*(a1) − g*(a2)‖ ≤ κ‖a1 − a2‖^{1/2} + 4√(δ_b/μ)` and
/// `|f*(a1) − f*(a2)| ≤ (L + L·L′)‖a1 − a2‖ + 2δ_b` on every pair; pairs
/// farther apart than `cap` are rejected. Pairs are split over `workers`
/// threads.
pub fn holder_audit(
    prob: &ParametricProblem,
    pairs: &[(Vec<f64>, Vec<f64>)],
    delta_b: f64,
    cap: f64,
    workers: usize,
) -> Result<HolderReport> {
    if let Some((a1, a2)) = pairs.iter().find(|(a1, a2)| dist(a1, a2) > cap) {
        return Err(Error::InvalidInput(format!("pair {a1:?}, {a2:?} is farther apart than {cap}")));
    }
    let kappa = prob.kappa();
    let argmax_slack = 4.0 * (delta_b / prob.mu).sqrt();
    let vl = prob.value_lipschitz();
    let value_slack = 2.0 * delta_b;
    let one = |(a1, a2): &(Vec<f64>, Vec<f64>)| -> Result<PairRecord> {
        let (v1, b1) = value_and_argmax(prob, a1, delta_b)?;
        let (v2, b2) = value_and_argmax(prob, a2, delta_b)?;
        let d = dist(a1, a2);
        let argmax_dist = dist(&b1, &b2);
        let value_gap = (v1 - v2).abs();
        Ok(PairRecord {
            a1: a1.clone(),
            a2: a2.clone(),
            param_dist: d,
            argmax_dist,
            value_gap,
            ratio: if d > 0.0 { argmax_dist / d.sqrt() } else { 0.0 },
            holder_ok: argmax_dist <= kappa * d.sqrt() + argmax_slack,
            value_ok: value_gap <= vl * d + value_slack,
        })
    };
    let records: Vec<PairRecord> = if workers <= 1 || pairs.len() < 2 {
        pairs.iter().map(one).collect::<Result<_>>()?
    } else {
        let chunk = pairs.len().div_ceil(workers);
        let parts: Vec<Result<Vec<PairRecord>>> = std::thread::scope(|sc| {
            let handles: Vec<_> =
                pairs.chunks(chunk).map(|c| sc.spawn(move || c.iter().map(one).collect::<Result<Vec<_>>>())).collect();
            handles.into_iter().map(|h| h.join().expect("audit worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(pairs.len());
        for p in parts {
            out.extend(p?);
        }
        out
    };
    let max_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(HolderReport {
        problem: prob.name.clone(),
        kappa,
        argmax_slack,
        value_lipschitz: vl,
        value_slack,
        delta_b,
        max_ratio,
        pairs: records,
    })
}

/// `count` pairs in the parameter box with `‖a1 − a2‖ ≤ cap`.
pub fn random_pairs(prob: &ParametricProblem, count: usize, cap: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = prob.k();
    (0..count)
        .map(|_| {
            let a1: Vec<f64> =
                prob.param_lo.iter().zip(&prob.param_hi).map(|(l, h)| l + (h - l) * rng.gen::<f64>()).collect();
            let dir: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() - 0.5).collect();
            let n = dir.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-12);
            let step = cap * rng.gen::<f64>();
            let a2: Vec<f64> = a1
                .iter()
                .zip(&dir)
                .zip(prob.param_lo.iter().zip(&prob.param_hi))
                .map(|((a, u), (l, h))| (a + step * u / n).clamp(*l, *h))
                .collect();
            (a1, a2)
        })
        .collect()
}

/// Audit configuration as read from JSON:
/// `{"family", "k", "box", "pairs", "delta_b", "cap"?, "seed"?}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditSpec {
    pub family: String,
    pub k: usize,
    pub param_box: f64,
    pub pairs: usize,
    pub delta_b: f64,
    pub cap: f64,
    pub seed: u64,
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec { family: "projection".into(), k: 2, param_box: 1.5, pairs: 200, delta_b: 1e-6, cap: 1.0, seed: 0 }
    }
}

impl AuditSpec {
    pub fn to_json(&self) -> Value {
        json!({
            "family": self.family,
            "k": self.k,
            "box": s(self.param_box),
            "pairs": self.pairs,
            "delta_b": s(self.delta_b),
            "cap": s(self.cap),
            "seed": self.seed,
        })
    }

    pub fn from_json(j: &J) -> Result<Self> {
        let d = AuditSpec::default();
        let family = j.field("family")?;
        let name = family.as_str()?.to_string();
        if name != "projection" && name != "moving_box" {
            return Err(family.err("family must be projection or moving_box"));
        }
        Ok(AuditSpec {
            family: name,
            k: j.opt("k").map(|v| v.as_usize()).transpose()?.unwrap_or(d.k),
            param_box: j.scalar_or("box", d.param_box)?,
            pairs: j.opt("pairs").map(|v| v.as_usize()).transpose()?.unwrap_or(d.pairs),
            delta_b: j.scalar_or("delta_b", d.delta_b)?,
            cap: j.scalar_or("cap", d.cap)?,
            seed: j.opt("seed").map(|v| v.as_usize()).transpose()?.map(|v| v as u64).unwrap_or(d.seed),
        })
    }

    pub fn run(&self, workers: usize) -> Result<HolderReport> {
        let prob = ParametricProblem::fixture(&self.family, self.k, self.param_box)?;
        holder_audit(&prob, &random_pairs(&prob, self.pairs, self.cap, self.seed), self.delta_b, self.cap, workers)
    }
}

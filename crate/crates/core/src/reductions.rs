//! Instance constructors in the hardness direction: Brouwer maps as
//! Kakutani correspondences, the smooth polynomial clamp, and generalized
//! circuits as strongly concave games.

use crate::bodies::{BodySpec, WellBounded};
use crate::games::{EquilibriumReport, StronglyConcaveGame, Target, Utility};
use crate::json::{s, J};
use crate::kakutani::{Conditioning, Correspondence, MapTemplate, Mode};
use crate::numerics::poly::Polynomial;
use crate::numerics::rational::{format_rational, from_f64, rat, rat_int, to_f64, Rational};
use crate::numerics::{CircuitBuilder, LinCircuit};
use crate::{Error, Result};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};
use std::sync::Arc;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

/// A Lipschitz map `M : [0,1]^d → [0,1]^d` given as a circuit.
#[derive(Debug, Clone)]
pub struct BrouwerInstance {
    pub m: LinCircuit,
    pub l: f64,
    pub gamma: f64,
}

impl BrouwerInstance {
    pub fn new(m: LinCircuit, l: f64, gamma: f64) -> Result<Self> {
        if m.num_inputs() != m.num_outputs() {
            return Err(Error::DimensionMismatch { expected: m.num_inputs(), got: m.num_outputs() });
        }
        if !(gamma > 0.0) || !(l >= 0.0) {
            return Err(Error::InvalidInput(format!("need γ > 0 and L ≥ 0, got γ={gamma}, L={l}")));
        }
        Ok(BrouwerInstance { m, l, gamma })
    }

    /// `M(x) = slope·x + shift·1` coordinatewise.
    pub fn affine(d: usize, slope: Rational, shift: Rational, gamma: f64) -> Result<Self> {
        let mut b = CircuitBuilder::new(d);
        let c = b.constant(shift);
        let outs = (0..d)
            .map(|k| {
                let x = b.input(k);
                let y = b.scale(x, slope.clone());
                b.add(y, c)
            })
            .collect();
        let l = to_f64(&slope).abs();
        Self::new(b.build(outs)?, l, gamma)
    }

    pub fn dim(&self) -> usize {
        self.m.num_inputs()
    }

    /// `clip(M(x))` into the unit cube.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.m.eval(x)?.into_iter().map(|t| t.clamp(0.0, 1.0)).collect())
    }

    /// `‖x − clip(M(x))‖`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        Ok(crate::numerics::linalg::dist(x, &self.eval(x)?))
    }

    pub fn to_json(&self) -> Value {
        json!({"M": self.m.to_json(), "L": s(self.l), "gamma": s(self.gamma)})
    }

    pub fn from_json(j: &J) -> Result<Self> {
        let m = LinCircuit::from_json(&j.field("M")?)?;
        Self::new(m, j.field("L")?.as_scalar()?, j.field("gamma")?.as_scalar()?).map_err(|e| j.err(&e.to_string()))
    }
}

/// `F(x) = B̄(clip(M(x)), γ/2)` with `η = γ/2`. A `γ/2`-fixed point of `F`
/// is a `γ`-fixed point of `M`.
pub fn brouwer_to_kakutani(b: &BrouwerInstance) -> Result<Correspondence> {
    let d = b.dim();
    let h = b.gamma / 2.0;
    let base = WellBounded::new(BodySpec::ball(vec![0.0; d], h), h, h).with_center(vec![0.0; d]);
    Correspondence::from_template(
        d,
        Mode::Projection,
        Conditioning::new(h, b.l),
        MapTemplate::Shifted { base, offset: b.m.clone(), clip: true },
    )
}

/// `T(z) = min{1, max{0, z}}`.
pub fn truncate(z: f64) -> f64 {
    z.clamp(0.0, 1.0)
}

pub const DEFAULT_DEGREE_CAP: usize = 512;
const GRID_POINTS: usize = 10_000;

/// A polynomial `p` of degree at most `2k + 2` with `|p − T| ≤ 6ε` and `p ∈ [0,1]`
/// on `[−1, 1]`.
///
/// With `Q_k = a_k(1 − τ²)^k`, `A0(t) = ∫_{−1}^t Q_k` and
/// `A1(t) = ∫_{−1}^t τQ_k`, the convolution of `T(2w)` with `Q_k` is
/// `r(w) = 2w(A0(½−w) − A0(−w)) + 2(A1(½−w) − A1(−w)) + 1 − A0(½−w)`
/// for `|w| ≤ ½`, and `p(z) = (r(z/2) + ε)/(1 + 2ε)`.
#[derive(Debug, Clone)]
pub struct ClampPoly {
    pub p: Polynomial,
    pub k: usize,
    pub eps: Rational,
    pub a_k: Rational,
    /// `log²(2/ε)/|log(1 − (ε/2)²)|`, before rounding.
    pub analytic_k: f64,
    pub certified_sup_error: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub monotone: bool,
}

/// Closed-form evaluation of `p` through the regularized incomplete beta
/// function; stable at degrees where expanded monomials cancel.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    k: f64,
    a_k: f64,
    eps: f64,
}

impl Kernel {
    fn new(k: usize, eps: f64) -> Self {
        let kf = k as f64;
        let ln_a = ln_gamma(2.0 * kf + 2.0) - (2.0 * kf + 1.0) * std::f64::consts::LN_2 - 2.0 * ln_gamma(kf + 1.0);
        Kernel { k: kf, a_k: ln_a.exp(), eps }
    }

    fn a0(&self, t: f64) -> f64 {
        beta_reg(self.k + 1.0, self.k + 1.0, ((1.0 + t) / 2.0).clamp(0.0, 1.0))
    }

    fn a1(&self, t: f64) -> f64 {
        let u = (1.0 - t * t).max(0.0);
        -self.a_k * u.powf(self.k + 1.0) / (2.0 * (self.k + 1.0))
    }

    fn r(&self, w: f64) -> f64 {
        let (hi, lo) = (0.5 - w, -w);
        2.0 * w * (self.a0(hi) - self.a0(lo)) + 2.0 * (self.a1(hi) - self.a1(lo)) + 1.0 - self.a0(hi)
    }

    fn p(&self, z: f64) -> f64 {
        (self.r(z / 2.0) + self.eps) / (1.0 + 2.0 * self.eps)
    }

    fn dp(&self, z: f64) -> f64 {
        let w = z / 2.0;
        (self.a0(0.5 - w) - self.a0(-w)) / (1.0 + 2.0 * self.eps)
    }

    /// Grid sup-error, value range and monotonicity on `[−1, 1]`.
    fn audit(&self) -> (f64, f64, f64, bool) {
        let (mut err, mut lo, mut hi, mut mono) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY, true);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..GRID_POINTS {
            let z = -1.0 + 2.0 * i as f64 / (GRID_POINTS - 1) as f64;
            let v = self.p(z);
            err = err.max((v - truncate(z)).abs());
            lo = lo.min(v);
            hi = hi.max(v);
            mono &= v >= prev - 1e-12;
            prev = v;
        }
        (err, lo, hi, mono)
    }
}

impl ClampPoly {
    pub fn degree(&self) -> usize {
        self.p.degree()
    }

    pub fn eps_f64(&self) -> f64 {
        to_f64(&self.eps)
    }

    /// `p(z)` for `z ∈ [−1, 1]`; arguments outside are clipped.
    pub fn eval(&self, z: f64) -> f64 {
        Kernel::new(self.k, self.eps_f64()).p(z.clamp(-1.0, 1.0))
    }

    /// `p′(z)` for `z ∈ (−1, 1)`; zero outside, matching the clipped [`eval`](Self::eval).
    pub fn deriv(&self, z: f64) -> f64 {
        if z.abs() >= 1.0 {
            return 0.0;
        }
        Kernel::new(self.k, self.eps_f64()).dp(z)
    }

    /// Exact `p(z)` from the rational coefficients.
    pub fn eval_exact(&self, z: &Rational) -> Rational {
        // Horner over integers: Σ c_i a^i b^(d−i) with c_i = n_i / l, one reduction at the end.
        let d = self.degree() as u32;
        let coeffs: Vec<Rational> = (0..=d).map(|i| self.p.coeff1(i)).collect();
        let l = coeffs.iter().fold(BigInt::one(), |l, c| l.lcm(c.denom()));
        let (a, b) = (z.numer(), z.denom());
        let mut acc = BigInt::zero();
        let mut bpow = BigInt::one();
        for c in coeffs.iter().rev() {
            acc = acc * a + c.numer() * (&l / c.denom()) * &bpow;
            bpow *= b;
        }
        // bpow is now b^(d+1); the sum carries b^d
        Rational::new(acc * b, l * bpow)
    }

    pub fn to_json(&self) -> Value {
        let coeffs: Vec<String> = (0..=self.degree() as u32).map(|i| format_rational(&self.p.coeff1(i))).collect();
        json!({
            "epsilon": format_rational(&self.eps),
            "k": self.k,
            "degree": self.degree(),
            "a_k": format_rational(&self.a_k),
            "analytic_k": s(self.analytic_k),
            "certified_sup_error": s(self.certified_sup_error),
            "min_value": s(self.min_value),
            "max_value": s(self.max_value),
            "monotone": self.monotone,
            "coefficients": coeffs,
        })
    }
}

fn binomials(n: usize) -> Vec<BigInt> {
    let mut row = vec![BigInt::one()];
    for i in 0..n {
        let next = &row[i] * BigInt::from(n - i) / BigInt::from(i + 1);
        row.push(next);
    }
    row
}

/// `a_k = 1/∫_{−1}^1 (1 − x²)^k = 1/Σ_j (−1)^j C(k,j)·2/(2j+1)`, exactly.
pub fn kernel_constant(k: usize) -> Rational {
    let mass: Rational = binomials(k)
        .into_iter()
        .enumerate()
        .map(|(j, c)| {
            let sign = if j % 2 == 0 { 1 } else { -1 };
            Rational::new(c * BigInt::from(2 * sign), BigInt::from(2 * j as i64 + 1))
        })
        .sum();
    mass.recip()
}

/// `2^m · f((s + σz)/2)` for an integer polynomial `f` of degree `≤ m`,
/// with `s ∈ {0, 1}` and `σ = −1`.
fn compose_half_linear(f: &[BigInt], s: i64, m: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); m + 1];
    for (deg, c) in f.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let scale = c << (m - deg);
        // (s − z)^deg
        for (i, b) in binomials(deg).into_iter().enumerate() {
            let sign = if i % 2 == 0 { 1 } else { -1 };
            let s_pow = if s == 0 { (deg == i) as i64 } else { 1 };
            if s_pow != 0 {
                out[i] += &scale * b * BigInt::from(sign * s_pow);
            }
        }
    }
    out
}

pub fn clamp_poly(eps: &Rational) -> Result<ClampPoly> {
    clamp_poly_with(eps, DEFAULT_DEGREE_CAP)
}

/// Builds the clamp polynomial with the smallest `k` whose grid sup-error is
/// within `6ε`, refusing degrees above `degree_cap`.
pub fn clamp_poly_with(eps: &Rational, degree_cap: usize) -> Result<ClampPoly> {
    if !eps.is_positive() || *eps > rat(1, 12) {
        return Err(Error::InvalidInput(format!("ε must lie in (0, 1/12], got {}", format_rational(eps))));
    }
    let ef = to_f64(eps);
    let analytic_k = (2.0 / ef).ln().powi(2) / (1.0 - (ef / 2.0).powi(2)).ln().abs();
    let k_max = degree_cap.saturating_sub(2) / 2;
    let ok = |k: usize| Kernel::new(k, ef).audit().0 <= 6.0 * ef;
    if k_max == 0 || !ok(k_max) {
        let need = (1..).map(|j| k_max.max(1) << j).find(|&k| k > 1 << 14 || ok(k)).unwrap();
        return Err(Error::OverflowBudget { degree: 2 * need + 2, cap: degree_cap });
    }
    let (mut lo, mut hi) = (0usize, k_max);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let k = hi;
    let kernel = Kernel::new(k, ef);
    let (err, min_value, max_value, monotone) = kernel.audit();
    let a_k = kernel_constant(k);

    // With l = lcm(1, …, 2k+2), l·A0/a_k and l·A1/a_k have integer
    // coefficients: A0/a_k = Σ_j (−1)^j C(k,j)(t^{2j+1} + 1)/(2j+1) and
    // A1/a_k = Σ_j (−1)^j C(k,j)(t^{2j+2} − 1)/(2j+2).
    let m = 2 * k + 2;
    let l = (1..=m).fold(BigInt::one(), |acc, i| acc.lcm(&BigInt::from(i)));
    let mut a0 = vec![BigInt::zero(); m + 1];
    let mut a1 = vec![BigInt::zero(); m + 1];
    for (j, c) in binomials(k).into_iter().enumerate() {
        let c = if j % 2 == 0 { c } else { -c };
        let t0 = &c * (&l / BigInt::from(2 * j + 1));
        let t1 = &c * (&l / BigInt::from(2 * j + 2));
        a0[2 * j + 1] += &t0;
        a0[0] += t0;
        a1[2 * j + 2] += &t1;
        a1[0] -= t1;
    }
    // w = z/2, so the bounds are (1 − z)/2 and −z/2; scaling by 2^m keeps
    // everything integral.
    let a0_hi = compose_half_linear(&a0, 1, m);
    let a0_lo = compose_half_linear(&a0, 0, m);
    let a1_hi = compose_half_linear(&a1, 1, m);
    let a1_lo = compose_half_linear(&a1, 0, m);
    // 2w·ΔA0 = z·ΔA0, so the numerator is z(A0hi − A0lo) + 2(A1hi − A1lo) − A0hi.
    let mut num = vec![BigInt::zero(); m + 2];
    for i in 0..=m {
        let d0 = &a0_hi[i] - &a0_lo[i];
        num[i + 1] += d0;
        num[i] += (&a1_hi[i] - &a1_lo[i]) * 2 - &a0_hi[i];
    }
    let scale = &a_k / Rational::from_integer(&l << m);
    let denom = (Rational::one() + eps * rat_int(2)).recip();
    let mut coeffs: Vec<Rational> = num.into_iter().map(|c| Rational::from_integer(c) * &scale * &denom).collect();
    coeffs[0] += (Rational::one() + eps) * &denom;
    let p = Polynomial::univariate(&coeffs);

    // The closed form must agree with the exact coefficients.
    for i in 0..=8 {
        let z = rat(i - 4, 4);
        let exact = to_f64(&p.eval_exact(std::slice::from_ref(&z))?);
        let fast = kernel.p(to_f64(&z));
        if (exact - fast).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "clamp evaluator mismatch at z={}: exact {exact}, closed form {fast}",
                format_rational(&z)
            )));
        }
    }
    Ok(ClampPoly { p, k, eps: eps.clone(), a_k, analytic_k, certified_sup_error: err, min_value, max_value, monotone })
}

/// Exact value of the clamp polynomial at a float argument, for audits.
pub fn clamp_exact_at(c: &ClampPoly, z: f64) -> f64 {
    to_f64(&c.eval_exact(&from_f64(z)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    /// Constant one.
    G1,
    /// `T(x_p − x_q)`.
    GMinus,
}

/// A generalized circuit over `n` nodes; `p`, `q` are 1-based node indices
/// read only by `G−` gates. A solution is `x ∈ [0,1]^n` with
/// `‖x − M(x)‖∞ ≤ c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GCircuitInstance {
    pub n: usize,
    pub t: Vec<Gate>,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub c: Rational,
}

impl GCircuitInstance {
    pub fn new(t: Vec<Gate>, p: Vec<usize>, q: Vec<usize>, c: Rational) -> Result<Self> {
        let n = t.len();
        if p.len() != n || q.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.len().min(q.len()) });
        }
        if n == 0 {
            return Err(Error::InvalidInput("a circuit needs at least one node".into()));
        }
        for (i, g) in t.iter().enumerate() {
            if *g == Gate::GMinus && !(1..=n).contains(&p[i]) || *g == Gate::GMinus && !(1..=n).contains(&q[i]) {
                return Err(Error::InvalidInput(format!("node {} reads outside 1..={n}", i + 1)));
            }
        }
        if !(c > Rational::zero() && c < Rational::one()) {
            return Err(Error::InvalidInput(format!("need c ∈ (0,1), got {}", format_rational(&c))));
        }
        Ok(GCircuitInstance { n, t, p, q, c })
    }

    /// Node 1 is `G1`, node 2 is `G−(1, 2)`; the only solution is `(1, ½)`.
    pub fn two_node(c: Rational) -> Self {
        Self::new(vec![Gate::G1, Gate::GMinus], vec![1, 1], vec![1, 2], c).expect("valid fixture")
    }

    /// `M(x)` with the true gates.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.t
            .iter()
            .enumerate()
            .map(|(i, g)| match g {
                Gate::G1 => 1.0,
                Gate::GMinus => truncate(x[self.p[i] - 1] - x[self.q[i] - 1]),
            })
            .collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n,
            "t": self.t.iter().map(|g| if *g == Gate::G1 { "1" } else { "-" }).collect::<Vec<_>>(),
            "p": self.p,
            "q": self.q,
            "c": format_rational(&self.c),
        })
    }

    pub fn from_json(j: &J) -> Result<Self> {
        let t = j
            .field("t")?
            .items()?
            .iter()
            .map(|g| match g.as_str()? {
                "1" => Ok(Gate::G1),
                "-" => Ok(Gate::GMinus),
                other => Err(g.err(&format!("unknown gate {other:?}, expected \"1\" or \"-\""))),
            })
            .collect::<Result<Vec<_>>>()?;
        let idx = |k: &str| -> Result<Vec<usize>> { j.field(k)?.items()?.iter().map(|v| v.as_usize()).collect() };
        let g = Self::new(t, idx("p")?, idx("q")?, j.field("c")?.as_rational()?).map_err(|e| j.err(&e.to_string()))?;
        let n = j.field("n")?.as_usize()?;
        if n != g.n {
            return Err(j.field("n")?.err(&format!("{} gates given", g.n)));
        }
        Ok(g)
    }
}

/// Two players on `[−1,1]^{2n}` holding node values shifted by `−½`:
/// `u₁ = 2 − ‖x₁ − (M̃(x₂ + ½) − ½)‖²` with `T` replaced by the clamp
/// polynomial at `c/12`, and `u₂ = 2 − ‖x₂ − x₁‖²`. Both are 2-strongly
/// concave in their own block and every equilibrium lies in `[−½, ½]^{2n}`,
/// away from the boundary. The game is solved to `ε = c²/48`, so a
/// `3ε`-regret point keeps `‖v − M(v)‖∞ ≤ c` for `v = x₂ + ½`.
pub fn gcircuit_to_game(g: &GCircuitInstance) -> Result<StronglyConcaveGame> {
    let n = g.n;
    let needs_clamp = g.t.contains(&Gate::GMinus);
    let clamp = if needs_clamp { Some(Arc::new(clamp_poly(&(&g.c / rat_int(12)))?)) } else { None };
    let targets1 = (0..n)
        .map(|i| match g.t[i] {
            Gate::G1 => Target::Const(rat(1, 2)),
            Gate::GMinus => Target::Clamp {
                a: n + g.p[i] - 1,
                b: n + g.q[i] - 1,
                shift: rat(-1, 2),
                poly: clamp.clone().expect("built above"),
            },
        })
        .collect();
    let u1 = Utility::Tracking { c: rat_int(2), own: (0..n).collect(), targets: targets1 };
    let u2 = Utility::Tracking { c: rat_int(2), own: (n..2 * n).collect(), targets: (0..n).map(Target::Var).collect() };
    let c = to_f64(&g.c);
    let l = 4.0 * (n as f64).sqrt() * (1.0 + 2f64.sqrt());
    StronglyConcaveGame::new(vec![0..n, n..2 * n], vec![u1, u2], 2.0, l, c * c / 48.0)
}

/// The `x₂` block shifted back by `½` and clipped to `[0,1]^n`.
pub fn map_back(g: &GCircuitInstance, eq: &EquilibriumReport) -> Vec<f64> {
    eq.x[g.n..2 * g.n].iter().map(|t| (t + 0.5).clamp(0.0, 1.0)).collect()
}

/// `‖x − M(x)‖∞` with the true gates.
pub fn verify_gcircuit(g: &GCircuitInstance, x: &[f64]) -> Result<f64> {
    crate::error::check_dim(g.n, x.len())?;
    Ok(x.iter().zip(g.eval(x)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

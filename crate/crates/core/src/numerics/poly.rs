//! Multivariate polynomials with exact rational coefficients.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde_json::{json, Value};

use super::rational::{format_rational, rat_int, to_f64, Rational};
use crate::error::{check_dim, Error, Result};
use crate::json::J;

/// A sum of monomials `coeff * prod x_j^{e_j}`. Terms are kept sorted by
/// exponent vector, with no zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Vec<u32>, Rational>,
    fterms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self::from_map(dim, BTreeMap::new())
    }

    pub fn constant(dim: usize, c: Rational) -> Self {
        let mut m = BTreeMap::new();
        m.insert(vec![0; dim], c);
        Self::from_map(dim, m)
    }

    /// The coordinate function `x_j`.
    pub fn var(dim: usize, j: usize) -> Self {
        let mut e = vec![0; dim];
        e[j] = 1;
        let mut m = BTreeMap::new();
        m.insert(e, Rational::one());
        Self::from_map(dim, m)
    }

    /// Builds from (coeff, exponents) pairs, merging duplicates.
    pub fn new(dim: usize, monomials: Vec<(Rational, Vec<u32>)>) -> Result<Self> {
        let mut m: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
        for (c, e) in monomials {
            check_dim(dim, e.len())?;
            *m.entry(e).or_insert_with(Rational::zero) += c;
        }
        Ok(Self::from_map(dim, m))
    }

    /// Univariate polynomial from coefficients in ascending degree.
    pub fn univariate(coeffs: &[Rational]) -> Self {
        let m = coeffs.iter().enumerate().map(|(i, c)| (vec![i as u32], c.clone())).collect();
        Self::from_map(1, m)
    }

    fn from_map(dim: usize, mut terms: BTreeMap<Vec<u32>, Rational>) -> Self {
        terms.retain(|_, c| !c.is_zero());
        let fterms = terms.iter().map(|(e, c)| (to_f64(c), e.clone())).collect();
        Polynomial { dim, terms, fterms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|e| e.iter().sum::<u32>() as usize).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of `x^i` for a univariate polynomial.
    pub fn coeff1(&self, i: u32) -> Rational {
        self.terms.get(&vec![i]).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (c, e) in &self.fterms {
            let mut t = *c;
            for (xj, &ej) in x.iter().zip(e) {
                if ej > 0 {
                    t *= xj.powi(ej as i32);
                }
            }
            s += t;
        }
        s
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut g = vec![0.0; self.dim];
        for (c, e) in &self.fterms {
            for j in 0..self.dim {
                if e[j] == 0 {
                    continue;
                }
                let mut t = *c * e[j] as f64;
                for (k, (&xk, &ek)) in x.iter().zip(e).enumerate() {
                    let p = if k == j { ek - 1 } else { ek };
                    if p > 0 {
                        t *= xk.powi(p as i32);
                    }
                }
                g[j] += t;
            }
        }
        Ok(g)
    }

    pub fn eval_exact(&self, x: &[Rational]) -> Result<Rational> {
        check_dim(self.dim, x.len())?;
        let mut s = Rational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xj, &ej) in x.iter().zip(e) {
                if ej > 0 {
                    t *= num_traits::pow(xj.clone(), ej as usize);
                }
            }
            s += t;
        }
        Ok(s)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, other.dim);
        let mut m = self.terms.clone();
        for (e, c) in &other.terms {
            *m.entry(e.clone()).or_insert_with(Rational::zero) += c;
        }
        Self::from_map(self.dim, m)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(&-Rational::one()))
    }

    pub fn scale(&self, s: &Rational) -> Polynomial {
        let m = self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect();
        Self::from_map(self.dim, m)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, other.dim);
        let mut m: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                *m.entry(e).or_insert_with(Rational::zero) += c1 * c2;
            }
        }
        Self::from_map(self.dim, m)
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.dim, Rational::one());
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                out = out.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        out
    }

    /// Univariate composition `self(q(x))`, where `q` may be multivariate.
    pub fn compose1(&self, q: &Polynomial) -> Result<Polynomial> {
        check_dim(1, self.dim)?;
        let deg = self.degree() as u32;
        let mut out = Polynomial::zero(q.dim);
        for i in (0..=deg).rev() {
            out = out.mul(q).add(&Polynomial::constant(q.dim, self.coeff1(i)));
        }
        Ok(out)
    }

    /// Antiderivative of a univariate polynomial with zero constant term.
    pub fn antiderivative1(&self) -> Result<Polynomial> {
        check_dim(1, self.dim)?;
        let m = self
            .terms
            .iter()
            .map(|(e, c)| (vec![e[0] + 1], c / rat_int(e[0] as i64 + 1)))
            .collect();
        Ok(Self::from_map(1, m))
    }

    pub fn to_json(&self) -> Value {
        let monos: Vec<Value> = self
            .terms
            .iter()
            .map(|(e, c)| json!({"coeff": format_rational(c), "exps": e}))
            .collect();
        json!({"dim": self.dim, "monomials": monos})
    }

    pub fn from_json(j: &J) -> Result<Polynomial> {
        let dim = j.field("dim")?.as_usize()?;
        if dim == 0 {
            return Err(j.field("dim")?.err("dimension must be positive"));
        }
        let mut monos = Vec::new();
        for m in j.field("monomials")?.items()? {
            let c = m.field("coeff")?.as_rational()?;
            let e: Vec<u32> = m
                .field("exps")?
                .items()?
                .iter()
                .map(|x| x.as_usize().map(|v| v as u32))
                .collect::<Result<_>>()?;
            if e.len() != dim {
                return Err(m.field("exps")?.err(&format!("expected {dim} exponents")));
            }
            monos.push((c, e));
        }
        Polynomial::new(dim, monos)
    }
}

/// Exact `∫_a^b p(x) dx` for a univariate `p`.
pub fn integrate_poly_1d(p: &Polynomial, a: &Rational, b: &Rational) -> Result<Rational> {
    if p.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: p.dim() });
    }
    let anti = p.antiderivative1()?;
    Ok(anti.eval_exact(std::slice::from_ref(b))? - anti.eval_exact(std::slice::from_ref(a))?)
}

//! Common interface over moment-vector pseudo-distributions and finitely
//! supported actual distributions.
//!
//! Every reweighting used by the rounding procedures is a single square
//! w = g² with g a product of powers of low-degree polynomials, so it is kept
//! factored. An actual distribution evaluates g pointwise (no degree limit);
//! a pseudo-distribution expands g densely and spends deg w degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::poly::Polynomial;
use crate::pseudodist::{self, PseudoDistribution, ReweightPolynomial, Tolerances};

/// w = (∏ fᵢ^{eᵢ})²
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareWeight {
    pub num_vars: usize,
    pub factors: Vec<(Polynomial, usize)>,
}

impl SquareWeight {
    pub fn one(num_vars: usize) -> Self {
        SquareWeight { num_vars, factors: Vec::new() }
    }

    /// f^{2e}
    pub fn power(f: Polynomial, e: usize) -> Self {
        SquareWeight { num_vars: f.num_vars, factors: vec![(f, e)] }
    }

    pub fn times(&self, other: &SquareWeight) -> Self {
        assert_eq!(self.num_vars, other.num_vars);
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        SquareWeight { num_vars: self.num_vars, factors }
    }

    pub fn is_one(&self) -> bool {
        self.factors.iter().all(|(_, e)| *e == 0)
    }

    /// degree of w
    pub fn degree(&self) -> usize {
        2 * self.factors.iter().map(|(f, e)| f.degree() * e).sum::<usize>()
    }

    /// ln |g(x)|
    pub fn log_abs_root(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .filter(|(_, e)| *e > 0)
            .map(|(f, e)| *e as f64 * f.eval(x).abs().ln())
            .sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (2.0 * self.log_abs_root(x)).exp()
    }

    /// g as a dense polynomial
    pub fn root(&self) -> Polynomial {
        let mut g = Polynomial::constant(self.num_vars, 1.0);
        for (f, e) in &self.factors {
            if *e > 0 {
                g = g.mul(&f.pow(*e));
            }
        }
        g
    }

    /// dense w with its one-square certificate
    pub fn expand(&self) -> ReweightPolynomial {
        ReweightPolynomial::square(self.root())
    }
}

pub trait Measure: Clone + Send + Sync + std::fmt::Debug {
    fn num_vars(&self) -> usize;

    /// remaining degree, `None` for an actual distribution
    fn degree(&self) -> Option<usize>;

    fn expect(&self, f: &Polynomial) -> Result<f64>;

    /// Ẽ f^j for j = 0..=upto
    fn power_moments(&self, f: &Polynomial, upto: usize) -> Result<Vec<f64>>;

    /// (Ẽ (f/s)^j for j = 0..=upto, s) with s > 0 chosen so high powers stay
    /// representable
    fn scaled_power_moments(&self, f: &Polynomial, upto: usize) -> Result<(Vec<f64>, f64)>;

    /// w·μ / Ẽw
    fn reweight_square(&self, w: &SquareWeight) -> Result<Self>;

    fn mean(&self, vars: &[usize]) -> Vec<f64>;

    fn second_moment(&self, vars: &[usize]) -> Matrix;

    /// whether `needed` more degrees are available
    fn has_degree(&self, needed: usize) -> bool {
        self.degree().is_none_or(|d| needed <= d)
    }

    fn covariance(&self, vars: &[usize]) -> Matrix {
        let m = self.mean(vars);
        let mut c = self.second_moment(vars);
        for i in 0..vars.len() {
            for j in 0..vars.len() {
                c[(i, j)] -= m[i] * m[j];
            }
        }
        c
    }
}

impl Measure for PseudoDistribution {
    fn num_vars(&self) -> usize {
        PseudoDistribution::num_vars(self)
    }

    fn degree(&self) -> Option<usize> {
        Some(PseudoDistribution::degree(self))
    }

    fn expect(&self, f: &Polynomial) -> Result<f64> {
        pseudodist::pseudo_expect(self, f)
    }

    fn power_moments(&self, f: &Polynomial, upto: usize) -> Result<Vec<f64>> {
        let need = f.degree() * upto;
        if need > PseudoDistribution::degree(self) {
            return Err(Error::DegreeExceeded { needed: need, available: PseudoDistribution::degree(self) });
        }
        let mut out = Vec::with_capacity(upto + 1);
        let mut p = Polynomial::constant(f.num_vars, 1.0);
        for j in 0..=upto {
            if j > 0 {
                p = p.mul(f);
            }
            out.push(pseudodist::pseudo_expect(self, &p)?);
        }
        Ok(out)
    }

    fn scaled_power_moments(&self, f: &Polynomial, upto: usize) -> Result<(Vec<f64>, f64)> {
        // bound on |f| over the box [-1,1]^m
        let s = f.coeffs.iter().map(|c| c.abs()).sum::<f64>();
        let s = if s > 0.0 { s } else { 1.0 };
        Ok((Measure::power_moments(self, &f.scale(1.0 / s), upto)?, s))
    }

    fn reweight_square(&self, w: &SquareWeight) -> Result<Self> {
        if w.is_one() {
            return Ok(self.clone());
        }
        pseudodist::reweight(self, &w.expand())
    }

    fn mean(&self, vars: &[usize]) -> Vec<f64> {
        PseudoDistribution::mean(self, vars)
    }

    fn second_moment(&self, vars: &[usize]) -> Matrix {
        PseudoDistribution::second_moment(self, vars)
    }
}

/// A finitely supported probability distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActualDistribution {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl ActualDistribution {
    pub fn new(support: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let Some(first) = support.first() else {
            return Err(Error::BadWeights("empty support".into()));
        };
        let m = first.0.len();
        let mut total = 0.0;
        for (x, w) in &support {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::BadWeights(format!("negative or non-finite weight {w}")));
            }
            if x.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: x.len() });
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::BadWeights(format!("weights sum to {total}")));
        }
        let (points, weights) = support.into_iter().filter(|(_, w)| *w > 0.0).unzip();
        Ok(ActualDistribution { points, weights })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        ActualDistribution::new(points.into_iter().map(|p| (p, w)).collect())
    }

    pub fn point_mass(x: Vec<f64>) -> Self {
        ActualDistribution { points: vec![x], weights: vec![1.0] }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> Vec<(Vec<f64>, f64)> {
        self.points.iter().cloned().zip(self.weights.iter().copied()).collect()
    }

    /// exact moments up to `degree`
    pub fn to_pseudo(&self, degree: usize) -> Result<PseudoDistribution> {
        pseudodist::embed_actual_distribution(&self.support(), degree)
    }
}

impl Measure for ActualDistribution {
    fn num_vars(&self) -> usize {
        self.points[0].len()
    }

    fn degree(&self) -> Option<usize> {
        None
    }

    fn expect(&self, f: &Polynomial) -> Result<f64> {
        if f.num_vars != self.num_vars() {
            return Err(Error::DimensionMismatch { expected: self.num_vars(), got: f.num_vars });
        }
        Ok(self.points.iter().zip(&self.weights).map(|(x, w)| w * f.eval(x)).sum())
    }

    fn power_moments(&self, f: &Polynomial, upto: usize) -> Result<Vec<f64>> {
        if f.num_vars != self.num_vars() {
            return Err(Error::DimensionMismatch { expected: self.num_vars(), got: f.num_vars });
        }
        let mut out = vec![0.0; upto + 1];
        for (x, w) in self.points.iter().zip(&self.weights) {
            let v = f.eval(x);
            let mut p = *w;
            for slot in out.iter_mut() {
                *slot += p;
                p *= v;
            }
        }
        Ok(out)
    }

    fn scaled_power_moments(&self, f: &Polynomial, upto: usize) -> Result<(Vec<f64>, f64)> {
        if f.num_vars != self.num_vars() {
            return Err(Error::DimensionMismatch { expected: self.num_vars(), got: f.num_vars });
        }
        let vals: Vec<f64> = self.points.iter().map(|x| f.eval(x)).collect();
        let s = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = if s > 0.0 { s } else { 1.0 };
        let mut out = vec![0.0; upto + 1];
        for (v, w) in vals.iter().zip(&self.weights) {
            let mut p = *w;
            for slot in out.iter_mut() {
                *slot += p;
                p *= v / s;
            }
        }
        Ok((out, s))
    }

    fn reweight_square(&self, w: &SquareWeight) -> Result<Self> {
        if w.num_vars != self.num_vars() {
            return Err(Error::DimensionMismatch { expected: self.num_vars(), got: w.num_vars });
        }
        let logs: Vec<f64> = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(x, wt)| wt.ln() + 2.0 * w.log_abs_root(x))
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let eps_norm = Tolerances::default().eps_norm;
        if !top.is_finite() {
            return Err(Error::DegenerateWeight { weight: 0.0 });
        }
        let rel: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = rel.iter().sum();
        let log_norm = top + total.ln();
        if log_norm < eps_norm.ln() {
            return Err(Error::DegenerateWeight { weight: log_norm.exp() });
        }
        let (points, weights) = self
            .points
            .iter()
            .zip(rel)
            .filter(|(_, r)| *r > 0.0)
            .map(|(x, r)| (x.clone(), r / total))
            .unzip();
        Ok(ActualDistribution { points, weights })
    }

    fn mean(&self, vars: &[usize]) -> Vec<f64> {
        let mut m = vec![0.0; vars.len()];
        for (x, w) in self.points.iter().zip(&self.weights) {
            for (slot, &v) in m.iter_mut().zip(vars) {
                *slot += w * x[v];
            }
        }
        m
    }

    fn second_moment(&self, vars: &[usize]) -> Matrix {
        let k = vars.len();
        let mut s = Matrix::zeros(k, k);
        for (x, w) in self.points.iter().zip(&self.weights) {
            for a in 0..k {
                for b in 0..k {
                    s[(a, b)] += w * x[vars[a]] * x[vars[b]];
                }
            }
        }
        s
    }
}

//! Scalar fixing and subspace fixing reweightings.
//!
//! Both procedures are generic over [`Measure`]; every reweighting they apply
//! is a single square, returned as a factored [`SquareWeight`] so callers can
//! compose them.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, GaussianSampler, Matrix, OrthoBasis};
use crate::measure::{Measure, SquareWeight};
use crate::poly::Polynomial;
use crate::pseudodist::{PseudoDistribution, Tolerances};

/// relative slack of the runtime monotonicity assertion
const MONOTONE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarFixReport {
    /// fixed point, |m| ≥ 1
    pub m: f64,
    /// Ẽ(ℓ−m)^{2d} / m^{2d}
    pub achieved_ratio: f64,
    pub degree_spent: usize,
    /// Ẽℓ² before each concentration test
    pub stage_trace: Vec<f64>,
    /// exponent k of each ℓ^{2k} stage
    pub stage_powers: Vec<usize>,
    /// +1 or −1
    pub sign: i8,
}

/// Stage exponent: the smallest integer k > 4 + 2d·ln(1/ε)/ε.
pub fn stage_power(d: usize, eps: f64) -> usize {
    (4.0 + 2.0 * d as f64 * (1.0 / eps).ln() / eps).floor() as usize + 1
}

/// ⌈C·d·ln n / ε²⌉
pub fn scalar_degree_budget(c: f64, d: usize, n: f64, eps: f64) -> usize {
    (c * d as f64 * n.ln() / (eps * eps)).ceil() as usize
}

/// ((g − c)/s)^e
fn shifted_power(g: &Polynomial, c: f64, s: f64, e: usize) -> Polynomial {
    g.sub(&Polynomial::constant(g.num_vars, c)).scale(1.0 / s).pow(e)
}

/// Concentrates the linear form ℓ around a value m with |m| ≥ 1:
/// Ẽ′(ℓ−m)^{2d} ≤ 3ε^{2d}m^{2d}.
///
/// Repeatedly reweights by (ℓ/ρ)^{2k} until Ẽ(ℓ²−M)^{2d} ≤ 3ε^{2d}M^{2d} for
/// M = Ẽℓ², then splits the sign with (ℓ ± √M)^{2d}. Requires Ẽℓ² ≥ 1.
pub fn fix_scalar<M: Measure>(
    mu: &M,
    ell: &Polynomial,
    d: usize,
    eps: f64,
    degree_budget: usize,
) -> Result<(M, SquareWeight, ScalarFixReport)> {
    if d == 0 || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::PreconditionViolated(format!("need d ≥ 1 and ε in (0,1), got d={d}, ε={eps}")));
    }
    if ell.num_vars != mu.num_vars() {
        return Err(Error::DimensionMismatch { expected: mu.num_vars(), got: ell.num_vars });
    }
    if ell.is_zero() {
        return Err(Error::PreconditionViolated("zero form".into()));
    }
    let r = ell.degree().max(1);
    let check_deg = 4 * d * r;
    let split_deg = 2 * d * r;
    if !mu.has_degree(check_deg) {
        return Err(Error::DegreeExhausted { needed: check_deg, available: mu.degree().unwrap_or(0) });
    }
    let (mom, s) = mu.scaled_power_moments(ell, 2)?;
    if mom[2] * s * s < 1.0 - 1e-9 {
        return Err(Error::PreconditionViolated(format!("Ẽℓ² = {:e} < 1", mom[2] * s * s)));
    }
    let g = ell.scale(1.0 / s);
    let target = 3.0 * eps.powi(2 * d as i32);
    let k_full = stage_power(d, eps);
    let eps_norm = Tolerances::default().eps_norm;

    let mut cur = mu.clone();
    let mut weight = SquareWeight::one(mu.num_vars());
    let mut spent = 0usize;
    let mut trace = Vec::new();
    let mut powers = Vec::new();
    let big_m = loop {
        let m2 = cur.expect(&g.mul(&g))?;
        trace.push(m2 * s * s);
        if m2 <= eps_norm * 1e-6 {
            return Err(Error::DegenerateWeight { weight: m2 });
        }
        let spread = cur.expect(&g.mul(&g).scale(1.0 / m2).sub(&Polynomial::constant(g.num_vars, 1.0)).pow(2 * d))?;
        if spread <= target {
            break m2;
        }
        let by_budget = degree_budget.saturating_sub(spent + split_deg) / (2 * r);
        let by_degree = cur.degree().map_or(usize::MAX, |dd| dd.saturating_sub(check_deg) / (2 * r));
        let k = k_full.min(by_budget).min(by_degree);
        if k == 0 {
            return Err(Error::DegreeExhausted { needed: spent + 2 * k_full * r + split_deg, available: degree_budget });
        }
        let (pm, t) = cur.scaled_power_moments(&g, 2 * k)?;
        if !(pm[2 * k] > 0.0) {
            return Err(Error::DegenerateWeight { weight: pm[2 * k] });
        }
        let rho = t * pm[2 * k].powf(0.5 / k as f64);
        let w = SquareWeight::power(g.scale(1.0 / rho), k);
        let next = cur.reweight_square(&w)?;
        let after = next.expect(&g.mul(&g))?;
        if after < m2 * (1.0 - MONOTONE_TOL) {
            return Err(Error::ContractViolated(format!("Ẽℓ² fell from {m2:e} to {after:e} under an ℓ^{{2k}} reweighting")));
        }
        weight = weight.times(&w);
        spent += 2 * k * r;
        powers.push(k);
        cur = next;
    };
    if spent + split_deg > degree_budget {
        return Err(Error::DegreeExhausted { needed: spent + split_deg, available: degree_budget });
    }
    let root = big_m.sqrt();
    let plus = cur.expect(&shifted_power(&g, -root, root, 2 * d))?;
    let minus = cur.expect(&shifted_power(&g, root, root, 2 * d))?;
    let sign: i8 = if plus >= minus { 1 } else { -1 };
    let m_g = sign as f64 * root;
    let w = SquareWeight::power(shifted_power(&g, -m_g, root, 1), d);
    cur = cur.reweight_square(&w)?;
    weight = weight.times(&w);
    spent += split_deg;
    let achieved_ratio = cur.expect(&shifted_power(&g, m_g, m_g.abs(), 2 * d))?;
    let report = ScalarFixReport {
        m: m_g * s,
        achieved_ratio,
        degree_spent: spent,
        stage_trace: trace,
        stage_powers: powers,
        sign,
    };
    Ok((cur, weight, report))
}

/// Whether reweighting the univariate μ by x^{2ℓ} keeps Ẽx² from dropping.
pub fn monotonicity_check(mu: &PseudoDistribution, ell: usize) -> Result<bool> {
    if mu.num_vars() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: mu.num_vars() });
    }
    let need = 2 * ell + 3;
    if mu.degree() < need {
        return Err(Error::DegreeExceeded { needed: need, available: mu.degree() });
    }
    let m = mu.moments();
    let (lo, hi) = (m[2 * ell], m[2 * ell + 2]);
    if !(lo > 0.0) {
        return Err(Error::DegenerateWeight { weight: lo });
    }
    Ok(hi / lo >= m[2] - MONOTONE_TOL * m[2].abs().max(1.0))
}

/// k-th raw moment of Beta(α, β).
pub fn beta_raw_moment(alpha: f64, beta: f64, k: usize) -> f64 {
    ln_beta_raw_moment(alpha, beta, k).exp()
}

pub fn ln_beta_raw_moment(alpha: f64, beta: f64, k: usize) -> f64 {
    (0..k).map(|r| ((alpha + r as f64) / (alpha + beta + r as f64)).ln()).sum()
}

/// c_k for dimension d: raw moment of Beta(1, d−2), with β clamped to 1
/// when d ≤ 2.
pub fn c_k(k: usize, d: usize) -> f64 {
    beta_raw_moment(1.0, beta_param(d), k)
}

fn beta_param(d: usize) -> f64 {
    (d as f64 - 2.0).max(1.0)
}

/// smallest k with c_{k+1} ≥ (1−ε)c_k for Beta(1, β)
pub fn beta_ratio_threshold(d: usize, eps: f64) -> usize {
    let b = beta_param(d);
    // (k+1)/(k+1+b) ≥ 1−ε
    let k = (b * (1.0 - eps) / eps - 1.0).ceil();
    k.max(0.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectionSampler {
    /// v ∝ g with g ~ N(0, Π_S Ẽxxᵀ Π_S)
    SecondMoment,
    /// v uniform on the unit sphere of S
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceFixConfig {
    pub delta: f64,
    /// main exponent; `None` uses ⌈(d/δ)·max(ln d, 1)^{C′}⌉, always capped by degree
    pub k: Option<usize>,
    pub retry_budget: usize,
    pub sampler: DirectionSampler,
    /// most degrees this call may spend; `None` is unlimited
    pub degree_budget: Option<usize>,
    pub c_prime: f64,
    /// stage cap for the norm prestage
    pub max_prestages: usize,
}

impl Default for SubspaceFixConfig {
    fn default() -> Self {
        SubspaceFixConfig {
            delta: 0.3,
            k: None,
            retry_budget: 2000,
            sampler: DirectionSampler::SecondMoment,
            degree_budget: None,
            c_prime: 3.0,
            max_prestages: 64,
        }
    }
}

impl SubspaceFixConfig {
    pub fn default_k(&self, dim: usize) -> usize {
        let d = dim.max(2) as f64;
        ((d / self.delta) * d.ln().max(1.0).powf(self.c_prime)).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceFixReport {
    /// unit vector of S in the coordinates of `vars`
    pub chosen_direction: Vec<f64>,
    pub samples_tried: usize,
    /// ‖Ẽ′Π_S x‖² / Ẽ‖Π_S x‖²
    pub achieved: f64,
    pub degree_spent: usize,
    pub k: usize,
    pub prestages: usize,
    pub scalar: ScalarFixReport,
}

/// x ↦ ⟨a, x_vars⟩ as a polynomial in all variables
pub fn linear_form(num_vars: usize, vars: &[usize], a: &[f64]) -> Polynomial {
    let mut full = vec![0.0; num_vars];
    for (&v, &c) in vars.iter().zip(a) {
        full[v] += c;
    }
    Polynomial::linear(&full, 0.0)
}

/// ‖Π_S x_vars‖²
pub fn projected_norm_sq(num_vars: usize, vars: &[usize], s: &OrthoBasis) -> Polynomial {
    let mut q = Polynomial::zero(num_vars);
    for b in &s.vectors {
        let l = linear_form(num_vars, vars, b);
        q = q.add(&l.mul(&l));
    }
    q
}

/// Reweights μ so that ‖Ẽ′Π_S x‖² ≥ (1−δ)Ẽ‖Π_S x‖², x the variables `vars`.
///
/// Inner accuracy ε = δ/10. Stages: fix ‖Π_S x‖² by even powers of itself,
/// draw directions v ∈ S until the two acceptance inequalities hold, reweight
/// by ⟨v,x⟩^{2k}, then fix the scalar ⟨v,x⟩.
pub fn fix_subspace<M: Measure, R: Rng + ?Sized>(
    mu: &M,
    vars: &[usize],
    s: &OrthoBasis,
    cfg: &SubspaceFixConfig,
    rng: &mut R,
) -> Result<(M, SquareWeight, SubspaceFixReport)> {
    let nv = mu.num_vars();
    if s.dim != vars.len() {
        return Err(Error::DimensionMismatch { expected: vars.len(), got: s.dim });
    }
    if s.is_empty() {
        return Err(Error::PreconditionViolated("empty subspace".into()));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::PreconditionViolated(format!("δ = {} outside (0,1)", cfg.delta)));
    }
    let eps = cfg.delta / 10.0;
    let dim = s.len();
    let budget = cfg.degree_budget.unwrap_or(usize::MAX);
    let avail = |m: &M| m.degree().unwrap_or(usize::MAX);
    // scalar fix of ⟨v,x⟩ needs 4 degrees to test and spends 2
    if budget < 2 || avail(mu) < 4 {
        return Err(Error::DegreeExhausted { needed: 4, available: avail(mu).min(budget) });
    }
    let k_cap = ((budget - 2) / 2).min((avail(mu) - 4) / 2);
    let k = cfg.k.unwrap_or_else(|| cfg.default_k(dim)).min(k_cap);

    let q = projected_norm_sq(nv, vars, s);
    let base_q = mu.expect(&q)?;
    if !(base_q > Tolerances::default().eps_norm) {
        return Err(Error::DegenerateWeight { weight: base_q });
    }

    let mut cur = mu.clone();
    let mut weight = SquareWeight::one(nv);
    let mut spent = 0usize;
    let mut prestages = 0usize;
    if k >= 1 {
        let pre_power = stage_power(1, eps);
        loop {
            let (qm, _) = cur.scaled_power_moments(&q, k)?;
            let fixed = (1..=k).all(|j| qm[j] <= (1.0 + eps).powi(j as i32) * qm[1].powi(j as i32) * (1.0 + 1e-12));
            if fixed {
                break;
            }
            if prestages >= cfg.max_prestages {
                return Err(Error::IterLimit { limit: cfg.max_prestages });
            }
            // keep 2k+2 for the acceptance test and 2k+4 for the rest
            let by_budget = budget.saturating_sub(spent + 2 * k + 2) / 4;
            let by_degree = avail(&cur).saturating_sub(2 * k + 4) / 4;
            let j = pre_power.min(by_budget).min(by_degree);
            if j == 0 {
                return Err(Error::DegreeExhausted { needed: spent + 4 * pre_power + 2 * k + 2, available: budget });
            }
            let (pm, t) = cur.scaled_power_moments(&q, 2 * j)?;
            if !(pm[2 * j] > 0.0) {
                return Err(Error::DegenerateWeight { weight: pm[2 * j] });
            }
            let rho = t * pm[2 * j].powf(0.5 / j as f64);
            let w = SquareWeight::power(q.scale(1.0 / rho), j);
            cur = cur.reweight_square(&w)?;
            weight = weight.times(&w);
            spent += 4 * j;
            prestages += 1;
        }
    }

    let (qm, tq) = cur.scaled_power_moments(&q, k.max(1))?;
    let eq = qm[1] * tq;
    let ln_eqk = if k == 0 { 0.0 } else { qm[k].ln() + k as f64 * tq.ln() };
    let ln_floor = ln_beta_raw_moment(1.0, beta_param(dim), k) - k as f64 * ((k + 1) as f64).ln();
    let e1 = (1.0 - eps).powi(3);

    let sampler = match cfg.sampler {
        DirectionSampler::SecondMoment => {
            let sigma = cur.second_moment(vars);
            let b = basis_matrix(s);
            let proj = b.transpose().matmul(&sigma)?.matmul(&b)?;
            Some(GaussianSampler::new(&linalg::psd_clip(&proj, Tolerances::default().eps_psd)?)?)
        }
        DirectionSampler::Uniform => None,
    };
    let mut tried = 0usize;
    let (v, ell) = loop {
        if tried >= cfg.retry_budget {
            return Err(Error::RetryExhausted { tries: tried });
        }
        tried += 1;
        let g: Vec<f64> = match &sampler {
            Some(smp) => smp.sample(rng),
            None => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
        };
        let gn = linalg::norm(&g);
        if !(gn > 0.0) {
            continue;
        }
        let mut v = vec![0.0; vars.len()];
        for (c, b) in g.iter().zip(&s.vectors) {
            linalg::axpy(c / gn, b, &mut v);
        }
        linalg::normalize(&mut v);
        let ell = linear_form(nv, vars, &v);
        let (lm, t) = cur.scaled_power_moments(&ell, 2 * k + 2)?;
        let (lo, hi) = (lm[2 * k], lm[2 * k + 2]);
        if !(lo > 0.0) {
            continue;
        }
        let ok1 = hi * t * t >= e1 * eq * lo;
        let ok2 = k == 0 || lo.ln() + 2.0 * k as f64 * t.ln() >= ln_floor + ln_eqk;
        if ok1 && ok2 {
            break (v, ell);
        }
    };

    if k >= 1 {
        let (pm, t) = cur.scaled_power_moments(&ell, 2 * k)?;
        let rho = t * pm[2 * k].powf(0.5 / k as f64);
        let w = SquareWeight::power(ell.scale(1.0 / rho), k);
        cur = cur.reweight_square(&w)?;
        weight = weight.times(&w);
        spent += 2 * k;
    }
    let el2 = cur.expect(&ell.mul(&ell))?;
    if !(el2 > 0.0) {
        return Err(Error::DegenerateWeight { weight: el2 });
    }
    let unit = ell.scale(1.0 / el2.sqrt());
    let scalar_budget = budget.saturating_sub(spent);
    let (fixed, w, scalar) = fix_scalar(&cur, &unit, 1, eps, scalar_budget)?;
    weight = weight.times(&w);
    spent += scalar.degree_spent;

    let mean = fixed.mean(vars);
    let coords = s.coordinates(&mean)?;
    let achieved = coords.iter().map(|c| c * c).sum::<f64>() / base_q;
    let report = SubspaceFixReport {
        chosen_direction: v,
        samples_tried: tried,
        achieved,
        degree_spent: spent,
        k,
        prestages,
        scalar,
    };
    Ok((fixed, weight, report))
}

/// columns = basis vectors
fn basis_matrix(s: &OrthoBasis) -> Matrix {
    let mut b = Matrix::zeros(s.dim, s.len());
    for (j, v) in s.vectors.iter().enumerate() {
        b.set_col(j, v);
    }
    b
}

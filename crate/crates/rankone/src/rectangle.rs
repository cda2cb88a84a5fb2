//! Approximate rank-one rectangles in a factored matrix A = UᵀV.
//!
//! Rounds of Gaussian thresholding shrink an index set I until the n×n
//! pair matrix, whose singular values are those of A_{I,I}/|I|, passes the
//! spectral test ε²σ₁² ≥ Σ_{j≥2} σⱼ².

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::linalg::{self, psd_clip, singular_values, sym_eig, GaussianSampler, Matrix};
use crate::textio::{write_matrix, Reader};
use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-10;
const TEST_TOL: f64 = 1e-10;

/// n×N matrix with unit columns u_1, …, u_N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorMatrix {
    pub cols: Matrix,
}

impl FactorMatrix {
    /// Normalizes every column not already unit within 1e−12; zero columns
    /// are rejected.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows == 0 || m.cols == 0 {
            return Err(Error::BadDims(format!("factor matrix {}×{}", m.rows, m.cols)));
        }
        let mut cols = m;
        for j in 0..cols.cols {
            let mut c = cols.col(j);
            let norm = linalg::norm(&c);
            if !(norm > 0.0) {
                return Err(Error::IllFormed(format!("column {j} is zero")));
            }
            if (norm - 1.0).abs() > 1e-12 {
                linalg::normalize(&mut c);
                cols.set_col(j, &c);
            }
        }
        Ok(FactorMatrix { cols })
    }

    /// N unit columns drawn uniformly from the sphere
    pub fn random<R: Rng + ?Sized>(n: usize, big_n: usize, rng: &mut R) -> Result<Self> {
        let data = (0..n * big_n).map(|_| rng.sample(StandardNormal)).collect();
        Self::new(Matrix::from_vec(n, big_n, data)?)
    }

    pub fn n(&self) -> usize {
        self.cols.rows
    }

    pub fn len(&self) -> usize {
        self.cols.cols
    }

    pub fn is_empty(&self) -> bool {
        self.cols.cols == 0
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.cols.col(i)
    }

    pub fn max_unit_error(&self) -> f64 {
        (0..self.len()).map(|i| (linalg::norm(&self.column(i)) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// n×|I| restriction
    pub fn restrict(&self, idx: &[usize]) -> Matrix {
        let n = self.n();
        let mut m = Matrix::zeros(n, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            for r in 0..n {
                m[(r, c)] = self.cols[(r, i)];
            }
        }
        m
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("FACTORS {} {}\n", self.n(), self.len());
        write_matrix(&mut s, &self.cols);
        s
    }

    /// Parses and normalizes; input columns need not be unit.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let h = r.header("FACTORS", 2)?;
        let m = r.matrix()?;
        if m.rows != h[0] || m.cols != h[1] {
            return Err(Error::BadDims(format!("header says {}×{}, matrix is {}×{}", h[0], h[1], m.rows, m.cols)));
        }
        if !r.at_end() {
            return Err(Error::Parse { line: r.line_no(), msg: "trailing content".into() });
        }
        Self::new(m)
    }
}

/// E_{i∈I} x_i x_iᵀ
fn second_moment(x: &Matrix) -> Matrix {
    x.matmul(&x.transpose()).expect("shapes").scale(1.0 / x.cols as f64)
}

/// mean and E_{i∈I} (x_i − m)(x_i − m)ᵀ
fn centered(x: &Matrix) -> (Vec<f64>, Matrix) {
    let n = x.rows;
    let k = x.cols as f64;
    let mean: Vec<f64> = (0..n).map(|r| x.row(r).iter().sum::<f64>() / k).collect();
    let mut c = second_moment(x);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] -= mean[i] * mean[j];
        }
    }
    (mean, c.symmetrize())
}

fn psd_sqrt(a: &Matrix) -> Result<Matrix> {
    let e = sym_eig(&a.symmetrize(), 1e-13)?;
    let n = a.rows;
    let mut s = Matrix::zeros(n, n);
    for (j, &l) in e.values.iter().enumerate() {
        let v = e.vector(j);
        let r = l.max(0.0).sqrt();
        for a in 0..n {
            for b in 0..n {
                s[(a, b)] += r * v[a] * v[b];
            }
        }
    }
    Ok(s)
}

/// Singular values of XᵀY (k×k) computed from n×n data: writing
/// Xᵀ = W_X S_X with S_X = (XXᵀ)^{1/2} gives XᵀY = W_X S_X S_Y W_Yᵀ.
pub fn gram_singular_values(x: &Matrix, y: &Matrix) -> Result<Vec<f64>> {
    if x.rows != y.rows || x.cols != y.cols {
        return Err(Error::DimensionMismatch { expected: x.cols, got: y.cols });
    }
    let sx = psd_sqrt(&x.matmul(&x.transpose())?)?;
    let sy = psd_sqrt(&y.matmul(&y.transpose())?)?;
    singular_values(&sx.matmul(&sy)?)
}

/// ε²σ₁² ≥ Σ_{j≥2} σⱼ² within TEST_TOL·Σσ²
pub fn spectral_test(s: &[f64], eps: f64) -> bool {
    let total: f64 = s.iter().map(|x| x * x).sum();
    let top = s.first().copied().unwrap_or(0.0);
    total - top * top <= eps * eps * top * top + TEST_TOL * total
}

/// √(Σ_{j≥2}σⱼ²)/σ₁, the relative Frobenius distance to the best rank one
pub fn rank_one_distance(s: &[f64]) -> f64 {
    let top = s.first().copied().unwrap_or(0.0);
    let tail: f64 = s.iter().skip(1).map(|x| x * x).sum();
    if top > 0.0 {
        tail.sqrt() / top
    } else if tail > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangleConfig {
    pub eps: f64,
    /// threshold parameter; None uses default_k
    pub k: Option<f64>,
    pub max_rounds: usize,
    pub seed: u64,
    pub retries: usize,
    /// required growth ‖Σ_{I′}‖_F ≥ (1+γ)‖Σ_I‖_F of the thresholded side
    pub gamma: f64,
    /// smallest |I′| a retry may produce
    pub min_size: usize,
    pub desk_factor: f64,
    pub exec: Exec,
}

impl RectangleConfig {
    pub fn new(eps: f64) -> Self {
        RectangleConfig {
            eps,
            k: None,
            max_rounds: 64,
            seed: 0,
            retries: 50,
            gamma: eps / 4.0,
            min_size: 1,
            desk_factor: 0.25,
            exec: Exec::default(),
        }
    }

    /// ⌈√n·ln²n/ε²⌉ scaled by the desk factor, at least 1
    pub fn default_k(&self, n: usize) -> f64 {
        let nf = n as f64;
        let full = (nf.sqrt() * nf.ln().powi(2) / (self.eps * self.eps)).ceil();
        (full * self.desk_factor).ceil().max(1.0)
    }

    pub fn k_for(&self, n: usize) -> f64 {
        self.k.unwrap_or_else(|| self.default_k(n))
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::PreconditionViolated(format!("ε = {} outside (0,1)", self.eps)));
        }
        if let Some(k) = self.k {
            if !(k >= 1.0) {
                return Err(Error::PreconditionViolated(format!("k = {k} below 1")));
            }
        }
        if self.retries == 0 || self.min_size == 0 {
            return Err(Error::PreconditionViolated("retries and min_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SpectralTest,
    /// no retry met the density and growth targets
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// 'U' or 'V'
    pub side: char,
    pub size: usize,
    pub retry: usize,
    /// ‖Σ‖_F of the thresholded side before and after
    pub frob_before: f64,
    pub frob_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangleResult {
    pub indices: Vec<usize>,
    /// relative distance of A_{I,I} from rank one
    pub distance: f64,
    pub rounds: usize,
    /// |I|/N after each round, starting with 1
    pub densities: Vec<f64>,
    pub passed: bool,
    pub stop: StopReason,
    pub k: f64,
    pub log: Vec<RoundRecord>,
}

/// (1/|I|) singular values of A_{I,I}
fn pair_spectrum(u: &FactorMatrix, v: &FactorMatrix, idx: &[usize]) -> Result<Vec<f64>> {
    let s = gram_singular_values(&u.restrict(idx), &v.restrict(idx))?;
    Ok(s.into_iter().map(|x| x / idx.len() as f64).collect())
}

fn retry_rng(seed: u64, round: usize, retry: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((round as u64) << 32) | retry as u64);
    r
}

/// I_g = {i : ⟨g, x_i⟩ ≥ √(k/n)} for g ~ N(0, I/n), as a density
pub fn first_round_density<R: Rng + ?Sized>(x: &FactorMatrix, k: f64, rng: &mut R) -> f64 {
    let n = x.n();
    let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt()).collect();
    let t = (k / n as f64).sqrt();
    let hits = (0..x.len()).filter(|&i| linalg::dot(&g, &x.column(i)) >= t).count();
    hits as f64 / x.len() as f64
}

enum Threshold {
    /// g ~ N(0, I/n), ⟨g, x_i⟩ ≥ √(k/n)
    Isotropic,
    /// g ~ N(0, Σ_c), ⟨g, x_i − m⟩ ≥ √k‖Σ_c‖_F
    Centered { mean: Vec<f64>, sampler: GaussianSampler, cutoff: f64 },
}

fn threshold_once(x: &FactorMatrix, idx: &[usize], rule: &Threshold, k: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.n();
    match rule {
        Threshold::Isotropic => {
            let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt()).collect();
            let t = (k / n as f64).sqrt();
            idx.iter().copied().filter(|&i| linalg::dot(&g, &x.column(i)) >= t).collect()
        }
        Threshold::Centered { mean, sampler, cutoff } => {
            let g = sampler.sample(rng);
            let gm = linalg::dot(&g, mean);
            idx.iter().copied().filter(|&i| linalg::dot(&g, &x.column(i)) - gm >= *cutoff).collect()
        }
    }
}

/// Iterative Gaussian thresholding, alternating between the U and V sides.
///
/// Each round draws up to `retries` Gaussians with seeds derived from
/// (seed, round, retry) and keeps the lowest-indexed retry whose set has at
/// least max(min_size, e^{−4k}|I|) elements and grows ‖Σ‖_F of the
/// thresholded side by (1+γ). Retries are evaluated through `cfg.exec`.
pub fn find_rectangle(u: &FactorMatrix, v: &FactorMatrix, cfg: &RectangleConfig) -> Result<RectangleResult> {
    cfg.validate()?;
    if u.n() != v.n() || u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let big_n = u.len();
    let k = cfg.k_for(u.n());
    let mut idx: Vec<usize> = (0..big_n).collect();
    let mut densities = vec![1.0];
    let mut log = Vec::new();
    let finish = |idx: Vec<usize>, densities, log, stop, rounds| -> Result<RectangleResult> {
        let s = pair_spectrum(u, v, &idx)?;
        Ok(RectangleResult {
            distance: rank_one_distance(&s),
            passed: spectral_test(&s, cfg.eps),
            indices: idx,
            rounds,
            densities,
            stop,
            k,
            log,
        })
    };
    for round in 0..cfg.max_rounds {
        let s = pair_spectrum(u, v, &idx)?;
        if spectral_test(&s, cfg.eps) {
            return finish(idx, densities, log, StopReason::SpectralTest, round);
        }
        let (side, x) = if round % 2 == 0 { ('U', u) } else { ('V', v) };
        let before = second_moment(&x.restrict(&idx)).frobenius_norm();
        let rule = if round == 0 {
            Threshold::Isotropic
        } else {
            let (mean, c) = centered(&x.restrict(&idx));
            let cutoff = k.sqrt() * c.frobenius_norm();
            Threshold::Centered { mean, sampler: GaussianSampler::new(&psd_clip(&c, 1e-9)?)?, cutoff }
        };
        let floor = ((-4.0 * k).exp() * idx.len() as f64).max(cfg.min_size as f64);
        let attempts: Vec<(usize, Option<(Vec<usize>, f64)>)> = cfg.exec.map_range(cfg.retries, |t| {
            let mut rng = retry_rng(cfg.seed, round, t);
            let next = threshold_once(x, &idx, &rule, k, &mut rng);
            let size = next.len();
            if size == 0 || (size as f64) < floor {
                return (size, None);
            }
            let after = second_moment(&x.restrict(&next)).frobenius_norm();
            (size, (after >= (1.0 + cfg.gamma) * before).then_some((next, after)))
        });
        if attempts.iter().all(|(size, _)| *size == 0) {
            return Err(Error::Emptied);
        }
        let Some((t, (next, after))) = attempts.into_iter().enumerate().find_map(|(t, (_, a))| a.map(|a| (t, a))) else {
            return finish(idx, densities, log, StopReason::Stalled, round);
        };
        log.push(RoundRecord { round, side, size: next.len(), retry: t, frob_before: before, frob_after: after });
        idx = next;
        densities.push(idx.len() as f64 / big_n as f64);
    }
    let s = pair_spectrum(u, v, &idx)?;
    if spectral_test(&s, cfg.eps) {
        return finish(idx, densities, log, StopReason::SpectralTest, cfg.max_rounds);
    }
    Err(Error::MaxRounds { limit: cfg.max_rounds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// singular values of (1/N)UVᵀ, n×n
    pub pair_sum: Vec<f64>,
    /// singular values of (1/N)UᵀV, N×N
    pub gram: Vec<f64>,
    /// (1/N) sv(S_U S_V), S_X = (XXᵀ)^{1/2}
    pub gram_via_roots: Vec<f64>,
    /// pair_sum and gram agree on their nonzero values
    pub literal_agree: bool,
    /// gram and gram_via_roots agree
    pub identity_agree: bool,
}

fn nonzero(s: &[f64], scale: f64) -> Vec<f64> {
    s.iter().copied().filter(|&x| x > 1e-10 * scale).collect()
}

fn spectra_agree(a: &[f64], b: &[f64], rel: f64) -> bool {
    let scale = a.iter().chain(b).fold(0.0f64, |m, &x| m.max(x));
    let (a, b) = (nonzero(a, scale), nonzero(b, scale));
    a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= rel * x.abs().max(y.abs()))
}

pub fn spectrum_report(u: &FactorMatrix, v: &FactorMatrix) -> Result<SpectrumReport> {
    if u.n() != v.n() || u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let inv = 1.0 / u.len() as f64;
    let pair_sum = singular_values(&u.cols.matmul(&v.cols.transpose())?.scale(inv))?;
    let gram = singular_values(&u.cols.transpose().matmul(&v.cols)?.scale(inv))?;
    let roots: Vec<f64> = gram_singular_values(&u.cols, &v.cols)?.into_iter().map(|x| x * inv).collect();
    Ok(SpectrumReport {
        literal_agree: spectra_agree(&pair_sum, &gram, 1e-8),
        identity_agree: spectra_agree(&gram, &roots, 1e-8),
        pair_sum,
        gram,
        gram_via_roots: roots,
    })
}

/// Whether (1/N)Σ u_i v_iᵀ and (1/N)UᵀV have the same nonzero singular
/// values within 1e−8 relative. True when U = V; false in general.
pub fn spectrum_equivalence_check(u: &FactorMatrix, v: &FactorMatrix) -> Result<bool> {
    Ok(spectrum_report(u, v)?.literal_agree)
}

/// ln(N/|I|), the KL divergence of the uniform distribution on I from the
/// uniform distribution on [N]
pub fn flat_reweighting_view(size: usize, big_n: usize) -> Result<f64> {
    if size == 0 {
        return Err(Error::EmptySet);
    }
    if size > big_n {
        return Err(Error::BadDims(format!("|I| = {size} exceeds N = {big_n}")));
    }
    Ok((big_n as f64 / size as f64).ln())
}

/// true when every column is unit within 1e−10
pub fn is_normalized(x: &FactorMatrix) -> bool {
    x.max_unit_error() <= UNIT_TOL
}

//! Rank-one-in-subspace search: given W ⊆ R^{n×n}, find unit u, v with uvᵀ
//! (nearly) in W by solving the moment relaxation and rounding it with the
//! two-block structure loop.
//!
//! Also: measurement operators, the candidate verifier, a grid oracle for
//! the distance of W from rank-one matrices, and the complex-to-real lift.

use std::fmt::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eig, Matrix, OrthoBasis};
use crate::measure::Measure;
use crate::pseudodist::Tolerances;
use crate::sdp::{build_bss_problem, solve_feasibility, SolverOptions, SolverReport, SolverStatus};
use crate::structure::{run_structure_2d, StructureConfig, StructureTrace};
use crate::textio::{write_matrix, Reader};

const ORTHO_TOL: f64 = 1e-10;
const DROP_TOL: f64 = 1e-10;

fn flatten(m: &Matrix) -> Vec<f64> {
    m.data.clone()
}

fn unflatten(n: usize, v: Vec<f64>) -> Matrix {
    Matrix { rows: n, cols: n, data: v }
}

fn trailing(r: &Reader) -> Result<()> {
    if r.at_end() {
        Ok(())
    } else {
        Err(Error::Parse { line: r.line_no(), msg: "trailing content".into() })
    }
}

/// An orthonormal basis of W ⊆ R^{n×n}, optionally with one of W^⊥.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    pub n: usize,
    pub basis: Vec<Matrix>,
    pub complement: Option<Vec<Matrix>>,
}

impl SubspaceBasis {
    /// Orthonormalizes a spanning set by modified Gram-Schmidt, dropping
    /// dependent members.
    pub fn from_spanning(n: usize, spanning: &[Matrix]) -> Result<Self> {
        let flat = Self::flat_checked(n, spanning)?;
        let ob = OrthoBasis::from_spanning(n * n, &flat, DROP_TOL)?;
        Ok(SubspaceBasis { n, basis: ob.vectors.into_iter().map(|v| unflatten(n, v)).collect(), complement: None })
    }

    /// Takes an already orthonormal basis (and complement) as is.
    pub fn new(n: usize, basis: Vec<Matrix>, complement: Option<Vec<Matrix>>) -> Result<Self> {
        let w = SubspaceBasis { n, basis, complement };
        w.validate()?;
        Ok(w)
    }

    fn flat_checked(n: usize, ms: &[Matrix]) -> Result<Vec<Vec<f64>>> {
        ms.iter()
            .map(|m| {
                if m.rows != n || m.cols != n {
                    Err(Error::BadDims(format!("expected {n}×{n}, got {}×{}", m.rows, m.cols)))
                } else {
                    Ok(flatten(m))
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let b = Self::flat_checked(self.n, &self.basis)?;
        let ob = OrthoBasis { dim: self.n * self.n, vectors: b.clone() };
        if ob.orthonormality_error() > ORTHO_TOL {
            return Err(Error::IllFormed("basis is not orthonormal".into()));
        }
        if let Some(c) = &self.complement {
            let c = Self::flat_checked(self.n, c)?;
            let oc = OrthoBasis { dim: self.n * self.n, vectors: c.clone() };
            if oc.orthonormality_error() > ORTHO_TOL {
                return Err(Error::IllFormed("complement is not orthonormal".into()));
            }
            for x in &b {
                for y in &c {
                    if linalg::dot(x, y).abs() > ORTHO_TOL {
                        return Err(Error::IllFormed("complement is not orthogonal to the basis".into()));
                    }
                }
            }
            if b.len() + c.len() != self.n * self.n {
                return Err(Error::IllFormed("basis and complement do not span the space".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn ortho(&self) -> OrthoBasis {
        OrthoBasis { dim: self.n * self.n, vectors: self.basis.iter().map(flatten).collect() }
    }

    /// orthonormal basis of W^⊥, computed if not stored
    pub fn complement_basis(&self) -> Vec<Matrix> {
        match &self.complement {
            Some(c) => c.clone(),
            None => self.ortho().complement().vectors.into_iter().map(|v| unflatten(self.n, v)).collect(),
        }
    }

    pub fn with_complement(mut self) -> Self {
        if self.complement.is_none() {
            self.complement = Some(self.complement_basis());
        }
        self
    }

    /// Π_W X
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows != self.n || x.cols != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.rows });
        }
        Ok(unflatten(self.n, self.ortho().project(&x.data)?))
    }

    /// ‖Π_W L‖²_F / ‖L‖²_F
    pub fn quality(&self, l: &Matrix) -> Result<f64> {
        let norm2 = l.frobenius_dot(l);
        if !(norm2 > 0.0) {
            return Err(Error::ZeroCandidate);
        }
        let c = self.ortho().coordinates(&l.data)?;
        Ok(c.iter().map(|x| x * x).sum::<f64>() / norm2)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "SUBSPACE {} {}", self.n, self.basis.len());
        for b in &self.basis {
            write_matrix(&mut s, b);
        }
        s
    }

    /// Parses a `SUBSPACE n k` file. An orthonormal set is kept bit-exact;
    /// anything else is orthonormalized.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let h = r.header("SUBSPACE", 2)?;
        let (n, k) = (h[0], h[1]);
        if n == 0 {
            return Err(Error::BadDims("n must be positive".into()));
        }
        let mats = (0..k).map(|_| r.matrix()).collect::<Result<Vec<_>>>()?;
        trailing(&r)?;
        let flat = Self::flat_checked(n, &mats)?;
        let ob = OrthoBasis { dim: n * n, vectors: flat };
        if ob.orthonormality_error() <= 1e-12 {
            Ok(SubspaceBasis { n, basis: mats, complement: None })
        } else {
            Self::from_spanning(n, &mats)
        }
    }
}

/// A two-party measurement 0 ≼ M ≼ I on R^{n²}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOperator {
    pub n: usize,
    pub m: Matrix,
}

impl MeasurementOperator {
    pub fn new(m: Matrix) -> Result<Self> {
        let n = (m.rows as f64).sqrt().round() as usize;
        if !m.is_square() || n * n != m.rows || n == 0 {
            return Err(Error::BadDims(format!("measurement must be n²×n², got {}×{}", m.rows, m.cols)));
        }
        let eps = Tolerances::default().eps_psd;
        let eig = sym_eig(&m, 1e-9)?;
        let (lo, hi) = (eig.min_value(), eig.values[0]);
        if lo < -eps || hi > 1.0 + eps {
            return Err(Error::IllFormed(format!("eigenvalues [{lo}, {hi}] outside [0, 1]")));
        }
        Ok(MeasurementOperator { n, m: m.symmetrize() })
    }

    /// Tr(Mρ) for the pure state ρ = vec(L)vec(L)ᵀ/‖L‖²_F
    pub fn acceptance(&self, l: &Matrix) -> Result<f64> {
        let norm2 = l.frobenius_dot(l);
        if !(norm2 > 0.0) {
            return Err(Error::ZeroCandidate);
        }
        let ml = self.m.matvec(&l.data)?;
        Ok(linalg::dot(&l.data, &ml) / norm2)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("MEASUREMENT {}\n", self.n);
        write_matrix(&mut s, &self.m);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let n = r.header("MEASUREMENT", 1)?[0];
        let m = r.matrix()?;
        trailing(&r)?;
        if m.rows != n * n {
            return Err(Error::BadDims(format!("header says n = {n}, matrix is {}×{}", m.rows, m.cols)));
        }
        MeasurementOperator::new(m)
    }
}

/// 1 − 1/n
pub fn default_threshold(n: usize) -> f64 {
    1.0 - 1.0 / n as f64
}

/// W = span of the eigenvectors of M with eigenvalue ≥ threshold, reshaped
/// to n×n; the remaining eigenvectors form the complement.
pub fn measurement_to_subspace(m: &MeasurementOperator, threshold: Option<f64>) -> Result<SubspaceBasis> {
    let t = threshold.unwrap_or_else(|| default_threshold(m.n));
    let eig = sym_eig(&m.m, 1e-12)?;
    let mut basis = Vec::new();
    let mut complement = Vec::new();
    for (j, &lam) in eig.values.iter().enumerate() {
        let v = unflatten(m.n, eig.vector(j));
        if lam >= t {
            basis.push(v);
        } else {
            complement.push(v);
        }
    }
    if basis.is_empty() {
        return Err(Error::EmptySubspace);
    }
    Ok(SubspaceBasis { n: m.n, basis, complement: Some(complement) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOneCandidate {
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    /// u0·v0ᵀ, unnormalized
    pub l: Matrix,
    pub projection_quality: f64,
    pub acceptance: Option<f64>,
}

impl RankOneCandidate {
    pub fn new(u0: Vec<f64>, v0: Vec<f64>, w: &SubspaceBasis) -> Result<Self> {
        let l = Matrix::outer(&u0, &v0);
        let q = w.quality(&l)?;
        Ok(RankOneCandidate { u0, v0, l, projection_quality: q, acceptance: None })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BssOptions {
    pub degree: usize,
    pub solver: SolverOptions,
}

impl Default for BssOptions {
    fn default() -> Self {
        BssOptions { degree: 6, solver: SolverOptions { trace_weight: 2.0, ..Default::default() } }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BssReport {
    pub degree: usize,
    pub solver: SolverReport,
    pub trace: Option<StructureTrace>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum BssOutcome {
    Candidate { candidate: RankOneCandidate, report: BssReport },
    /// the degree-d relaxation is infeasible: no unit u, v with uvᵀ ∈ W
    Fail { report: BssReport },
}

impl BssOutcome {
    pub fn candidate(&self) -> Option<&RankOneCandidate> {
        match self {
            BssOutcome::Candidate { candidate, .. } => Some(candidate),
            BssOutcome::Fail { .. } => None,
        }
    }

    pub fn report(&self) -> &BssReport {
        match self {
            BssOutcome::Candidate { report, .. } | BssOutcome::Fail { report } => report,
        }
    }
}

/// Solves the degree-`opts.degree` relaxation for unit u, v with uvᵀ ∈ W,
/// runs the pair structure loop and reads out u₀ = Ẽu, v₀ = Ẽv.
///
/// With `cfg.per_iter_degree == 0` each block fix may spend (d−2)/2 degrees.
pub fn solve_bss(w: &SubspaceBasis, eps: f64, cfg: &StructureConfig, opts: &BssOptions) -> Result<BssOutcome> {
    if w.basis.is_empty() {
        return Err(Error::EmptySubspace);
    }
    let n = w.n;
    let complement = w.complement_basis();
    let problem = build_bss_problem(n, &complement, opts.degree)?;
    let outcome = solve_feasibility(&problem, &opts.solver)?;
    let mut report = BssReport { degree: opts.degree, solver: outcome.report.clone(), trace: None };
    let mu = match outcome.report.status {
        SolverStatus::Infeasible => return Ok(BssOutcome::Fail { report }),
        SolverStatus::IterLimit => return Err(Error::SolverIterLimit { iterations: outcome.report.iterations }),
        SolverStatus::Feasible => outcome.distribution.ok_or(Error::ContractViolated("feasible without moments".into()))?,
    };
    let mut cfg = StructureConfig { eps, ..cfg.clone() };
    if cfg.per_iter_degree == 0 {
        cfg.per_iter_degree = (opts.degree.saturating_sub(2) / 2).max(2);
    }
    let us: Vec<usize> = (0..n).collect();
    let vs: Vec<usize> = (n..2 * n).collect();
    let (fixed, _, trace) = run_structure_2d(&mu, &us, &vs, &cfg)?;
    let u0 = Measure::mean(&fixed, &us);
    let v0 = Measure::mean(&fixed, &vs);
    report.trace = Some(trace);
    let candidate = RankOneCandidate::new(u0, v0, w)?;
    Ok(BssOutcome::Candidate { candidate, report })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub quality: f64,
    pub acceptance: Option<f64>,
    /// 1 − 2(1 − quality)
    pub acceptance_floor: Option<f64>,
    pub acceptance_ok: Option<bool>,
}

/// Recomputes the projection quality and, given M, the acceptance Tr(Mρ)
/// with the bound Tr(Mρ) ≥ 1 − 2(1 − quality).
pub fn verify_candidate(
    cand: &RankOneCandidate,
    w: &SubspaceBasis,
    m: Option<&MeasurementOperator>,
) -> Result<Verification> {
    if !(cand.l.frobenius_norm() > 0.0) {
        return Err(Error::ZeroCandidate);
    }
    let quality = w.quality(&cand.l)?;
    let mut v = Verification { quality, acceptance: None, acceptance_floor: None, acceptance_ok: None };
    if let Some(m) = m {
        let acc = m.acceptance(&cand.l)?;
        let floor = 1.0 - 2.0 * (1.0 - quality);
        v.acceptance = Some(acc);
        v.acceptance_floor = Some(floor);
        v.acceptance_ok = Some(acc >= floor - Tolerances::default().eps_psd);
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Farness {
    /// √(1 − best grid quality)
    pub estimate: f64,
    /// lower bound valid for every unit u, v
    pub certified_lower: f64,
    pub best_quality: f64,
    pub best_u: Vec<f64>,
    pub grid_points: usize,
    pub cover_radius: f64,
}

/// max over unit v of ‖Π_W(uvᵀ)‖²_F, the top eigenvalue of Σ_k (B_kᵀu)(B_kᵀu)ᵀ
pub fn best_quality_for(w: &SubspaceBasis, u: &[f64]) -> Result<f64> {
    let n = w.n;
    let mut q = Matrix::zeros(n, n);
    for b in &w.basis {
        let c = b.tmatvec(u)?;
        for i in 0..n {
            for j in 0..n {
                q[(i, j)] += c[i] * c[j];
            }
        }
    }
    Ok(sym_eig(&q, 1e-13)?.values[0].max(0.0))
}

/// Distance of W from the rank-one matrices, min over unit u, v of
/// ‖uvᵀ − Π_W uvᵀ‖_F, by a grid over u on the faces x_a = 1 of the cube.
///
/// The exact maximization over v makes the objective 2-Lipschitz in u, and
/// the grid covers the sphere within (step/2)√(n−1), which gives the
/// certified bound.
pub fn grid_farness(w: &SubspaceBasis, step: f64) -> Result<Farness> {
    let n = w.n;
    if !(step > 0.0 && step <= 2.0) {
        return Err(Error::PreconditionViolated(format!("grid step {step}")));
    }
    let per_axis = (2.0 / step).ceil() as usize + 1;
    let h = 2.0 / (per_axis - 1).max(1) as f64;
    let cells = per_axis.pow((n - 1) as u32);
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut count = 0;
    for face in 0..n {
        for cell in 0..cells {
            let mut u = vec![0.0; n];
            let mut c = cell;
            for (a, slot) in u.iter_mut().enumerate() {
                if a == face {
                    *slot = 1.0;
                } else {
                    *slot = -1.0 + h * (c % per_axis) as f64;
                    c /= per_axis;
                }
            }
            linalg::normalize(&mut u);
            let q = best_quality_for(w, &u)?;
            count += 1;
            if q > best.0 {
                best = (q, u);
            }
        }
    }
    let r = if n == 1 { 0.0 } else { 0.5 * h * ((n - 1) as f64).sqrt() };
    let q = best.0.min(1.0);
    Ok(Farness {
        estimate: (1.0 - q).max(0.0).sqrt(),
        certified_lower: (1.0 - (q + 2.0 * r).min(1.0)).sqrt(),
        best_quality: q,
        best_u: best.1,
        grid_points: count,
        cover_radius: r,
    })
}

fn random_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v = random_vec(n, rng);
        if linalg::normalize(&mut v) > 1e-12 {
            return v;
        }
    }
}

fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix { rows, cols, data: random_vec(rows * cols, rng) }
}

/// A recorded planted pair with uvᵀ ∈ W.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

fn write_row(s: &mut String, v: &[f64]) {
    write_matrix(s, &Matrix { rows: 1, cols: v.len(), data: v.to_vec() });
}

fn read_row(r: &mut Reader, n: usize) -> Result<Vec<f64>> {
    let m = r.matrix()?;
    if m.rows != 1 || m.cols != n {
        return Err(Error::BadDims(format!("expected a 1×{n} row, got {}×{}", m.rows, m.cols)));
    }
    Ok(m.data)
}

impl Plant {
    pub fn to_text(&self) -> String {
        let mut s = format!("PLANT {}\n", self.u.len());
        write_row(&mut s, &self.u);
        write_row(&mut s, &self.v);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let n = r.header("PLANT", 1)?[0];
        let u = read_row(&mut r, n)?;
        let v = read_row(&mut r, n)?;
        trailing(&r)?;
        Ok(Plant { u, v })
    }
}

/// W = span{uvᵀ} plus dim_w − 1 random directions, u, v random unit.
pub fn planted_instance<R: Rng + ?Sized>(n: usize, dim_w: usize, rng: &mut R) -> Result<(SubspaceBasis, Plant)> {
    check_dims(n, dim_w)?;
    let u = random_unit(n, rng);
    let v = random_unit(n, rng);
    let mut spanning = vec![Matrix::outer(&u, &v)];
    let mut w = SubspaceBasis::from_spanning(n, &spanning)?;
    while w.dim() < dim_w {
        spanning.push(random_matrix(n, n, rng));
        w = SubspaceBasis::from_spanning(n, &spanning)?;
    }
    Ok((w, Plant { u, v }))
}

/// A uniformly random dim_w-dimensional W.
pub fn random_instance<R: Rng + ?Sized>(n: usize, dim_w: usize, rng: &mut R) -> Result<SubspaceBasis> {
    check_dims(n, dim_w)?;
    let mut spanning = Vec::new();
    let mut w = SubspaceBasis::from_spanning(n, &spanning)?;
    while w.dim() < dim_w {
        spanning.push(random_matrix(n, n, rng));
        w = SubspaceBasis::from_spanning(n, &spanning)?;
    }
    Ok(w)
}

fn check_dims(n: usize, dim_w: usize) -> Result<()> {
    if n == 0 || dim_w == 0 || dim_w > n * n {
        return Err(Error::BadDims(format!("need n ≥ 1 and 1 ≤ dim_W ≤ n², got n = {n}, dim_W = {dim_w}")));
    }
    Ok(())
}

/// Complex subspace W_c = {X : ⟨W^j, X⟩ = 0 ∀j} of C^{n×n}, each W^j stored
/// as (C^j, D^j) with W^j = C^j + iD^j.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexSubspace {
    pub n: usize,
    pub constraints: Vec<(Matrix, Matrix)>,
}

/// [[C, −D], [D, C]] and [[D, C], [−C, D]]: the real and imaginary parts of
/// ⟨W, X⟩ as functionals of the lifted Y
fn lifted_constraints(c: &Matrix, d: &Matrix) -> (Matrix, Matrix) {
    let n = c.rows;
    let mut g1 = Matrix::zeros(2 * n, 2 * n);
    let mut g2 = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let (cij, dij) = (c[(i, j)], d[(i, j)]);
            g1[(i, j)] = cij;
            g1[(i, n + j)] = -dij;
            g1[(n + i, j)] = dij;
            g1[(n + i, n + j)] = cij;
            g2[(i, j)] = dij;
            g2[(i, n + j)] = cij;
            g2[(n + i, j)] = -cij;
            g2[(n + i, n + j)] = dij;
        }
    }
    (g1, g2)
}

impl ComplexSubspace {
    pub fn new(n: usize, constraints: Vec<(Matrix, Matrix)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::IllFormed("n must be positive".into()));
        }
        let mut ob = OrthoBasis::empty(4 * n * n);
        for (c, d) in &constraints {
            if c.rows != n || c.cols != n || d.rows != n || d.cols != n {
                return Err(Error::IllFormed(format!("constraint matrices must be {n}×{n}")));
            }
            let (g1, g2) = lifted_constraints(c, d);
            if !ob.try_push(&g1.data, DROP_TOL) || !ob.try_push(&g2.data, DROP_TOL) {
                return Err(Error::IllFormed("constraints are linearly dependent".into()));
            }
        }
        Ok(ComplexSubspace { n, constraints })
    }

    /// complex dimension of W_c
    pub fn dim(&self) -> usize {
        self.n * self.n - self.constraints.len()
    }

    /// largest |⟨W^j, X⟩| over the constraints, X = A + iB
    pub fn residual(&self, a: &Matrix, b: &Matrix) -> f64 {
        self.constraints
            .iter()
            .map(|(c, d)| {
                let re = c.frobenius_dot(a) + d.frobenius_dot(b);
                let im = d.frobenius_dot(a) - c.frobenius_dot(b);
                re.hypot(im)
            })
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("CSUBSPACE {} {}\n", self.n, self.constraints.len());
        for (c, d) in &self.constraints {
            write_matrix(&mut s, c);
            write_matrix(&mut s, d);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let h = r.header("CSUBSPACE", 2)?;
        let mut cons = Vec::new();
        for _ in 0..h[1] {
            let c = r.matrix()?;
            let d = r.matrix()?;
            cons.push((c, d));
        }
        trailing(&r)?;
        ComplexSubspace::new(h[0], cons)
    }
}

/// 𝒴 = {Y ∈ R^{2n×2n} : (Y₁₁+Y₂₂) + i(Y₂₁−Y₁₂) ∈ W_c}, with complement.
pub fn reduce_complex_to_real(wc: &ComplexSubspace) -> Result<SubspaceBasis> {
    let n2 = 2 * wc.n;
    let mut perp = OrthoBasis::empty(n2 * n2);
    for (c, d) in &wc.constraints {
        let (g1, g2) = lifted_constraints(c, d);
        if !perp.try_push(&g1.data, DROP_TOL) || !perp.try_push(&g2.data, DROP_TOL) {
            return Err(Error::IllFormed("constraints are linearly dependent".into()));
        }
    }
    split_by_complement(n2, perp)
}

fn split_by_complement(n: usize, perp: OrthoBasis) -> Result<SubspaceBasis> {
    let basis = perp.complement();
    if basis.is_empty() {
        return Err(Error::EmptySubspace);
    }
    Ok(SubspaceBasis {
        n,
        basis: basis.vectors.into_iter().map(|v| unflatten(n, v)).collect(),
        complement: Some(perp.vectors.into_iter().map(|v| unflatten(n, v)).collect()),
    })
}

/// Intersects 𝒴 with Im U₁ = 0 and Im V₁ = 0 (row n and column n zero).
///
/// W_c is complex-linear, so x and y carry independent phases and the real
/// rank-ones of 𝒴 come in tori; the relaxation would average over them.
pub fn gauge_fix(y: &SubspaceBasis) -> Result<SubspaceBasis> {
    let m = y.n;
    if m % 2 == 1 {
        return Err(Error::BadDims(format!("lifted size {m} is odd")));
    }
    let half = m / 2;
    let mut perp = OrthoBasis { dim: m * m, vectors: y.complement_basis().iter().map(flatten).collect() };
    for j in 0..m {
        let mut e = vec![0.0; m * m];
        e[half * m + j] = 1.0;
        perp.try_push(&e, DROP_TOL);
        let mut e = vec![0.0; m * m];
        e[j * m + half] = 1.0;
        perp.try_push(&e, DROP_TOL);
    }
    split_by_complement(m, perp)
}

/// (x, y) with x y* ∈ W_c, stored by real and imaginary parts
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexPlant {
    pub x_re: Vec<f64>,
    pub x_im: Vec<f64>,
    pub y_re: Vec<f64>,
    pub y_im: Vec<f64>,
}

impl ComplexPlant {
    /// (Re xy*, Im xy*)
    pub fn product(&self) -> (Matrix, Matrix) {
        complex_outer(&self.x_re, &self.x_im, &self.y_re, &self.y_im)
    }

    /// real pair (u, v) = ((Re x, Im x), (Re y, Im y)); uvᵀ lies in the lift
    pub fn embed(&self) -> (Vec<f64>, Vec<f64>) {
        let mut u = self.x_re.clone();
        u.extend_from_slice(&self.x_im);
        let mut v = self.y_re.clone();
        v.extend_from_slice(&self.y_im);
        (u, v)
    }

    /// Rotates x and y by unit phases so that x₁ and y₁ are real and
    /// nonnegative; x y* changes by a unit factor, so membership in W_c is kept.
    pub fn gauge_normalized(&self) -> ComplexPlant {
        let rot = |re: &[f64], im: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let r = re[0].hypot(im[0]);
            if r == 0.0 {
                return (re.to_vec(), im.to_vec());
            }
            // multiply by conj(z₁)/|z₁|
            let (c, s) = (re[0] / r, -im[0] / r);
            let nr = re.iter().zip(im).map(|(a, b)| a * c - b * s).collect();
            let mut ni: Vec<f64> = re.iter().zip(im).map(|(a, b)| a * s + b * c).collect();
            ni[0] = 0.0;
            (nr, ni)
        };
        let (x_re, x_im) = rot(&self.x_re, &self.x_im);
        let (y_re, y_im) = rot(&self.y_re, &self.y_im);
        ComplexPlant { x_re, x_im, y_re, y_im }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("CPLANT {}\n", self.x_re.len());
        for r in [&self.x_re, &self.x_im, &self.y_re, &self.y_im] {
            write_row(&mut s, r);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let n = r.header("CPLANT", 1)?[0];
        let x_re = read_row(&mut r, n)?;
        let x_im = read_row(&mut r, n)?;
        let y_re = read_row(&mut r, n)?;
        let y_im = read_row(&mut r, n)?;
        trailing(&r)?;
        Ok(ComplexPlant { x_re, x_im, y_re, y_im })
    }
}

/// (Re, Im) of (a + ib)(c + id)*
fn complex_outer(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> (Matrix, Matrix) {
    let re = Matrix::outer(a, c).add(&Matrix::outer(b, d)).expect("shapes");
    let im = Matrix::outer(b, c).sub(&Matrix::outer(a, d)).expect("shapes");
    (re, im)
}

/// W_c of complex dimension dim_w containing a planted unit x y*.
///
/// Constraints are random complex matrices made orthogonal to x y*.
pub fn planted_complex_instance<R: Rng + ?Sized>(
    n: usize,
    dim_w: usize,
    rng: &mut R,
) -> Result<(ComplexSubspace, ComplexPlant)> {
    check_dims(n, dim_w)?;
    let unit_c = |rng: &mut R| {
        let mut z = random_vec(2 * n, rng);
        linalg::normalize(&mut z);
        (z[..n].to_vec(), z[n..].to_vec())
    };
    let (x_re, x_im) = unit_c(rng);
    let (y_re, y_im) = unit_c(rng);
    let plant = ComplexPlant { x_re, x_im, y_re, y_im };
    let (pa, pb) = plant.product();
    let p2 = pa.frobenius_dot(&pa) + pb.frobenius_dot(&pb);
    let codim = n * n - dim_w;
    let mut cons: Vec<(Matrix, Matrix)> = Vec::new();
    while cons.len() < codim {
        let (mut c, mut d) = (random_matrix(n, n, rng), random_matrix(n, n, rng));
        // ⟨W, P⟩ = Σ conj(W)P = (⟨C,A⟩ + ⟨D,B⟩) + i(⟨C,B⟩ − ⟨D,A⟩)
        let re = c.frobenius_dot(&pa) + d.frobenius_dot(&pb);
        let im = c.frobenius_dot(&pb) - d.frobenius_dot(&pa);
        // W ← W − conj(⟨W,P⟩)/‖P‖² · P
        let (sr, si) = (re / p2, -im / p2);
        c = c.sub(&pa.scale(sr).sub(&pb.scale(si))?)?;
        d = d.sub(&pb.scale(sr).add(&pa.scale(si))?)?;
        let mut trial = cons.clone();
        trial.push((c, d));
        if ComplexSubspace::new(n, trial.clone()).is_ok() {
            cons = trial;
        }
    }
    Ok((ComplexSubspace::new(n, cons)?, plant))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexCandidate {
    pub u_re: Vec<f64>,
    pub u_im: Vec<f64>,
    pub v_re: Vec<f64>,
    pub v_im: Vec<f64>,
    /// X = (Y₁₁+Y₂₂) + i(Y₂₁−Y₁₂) for Y = Π_𝒴(uvᵀ), an element of W_c
    pub x_re: Matrix,
    pub x_im: Matrix,
    /// ‖X − UV*‖_F
    pub residual: f64,
    /// ‖UV*‖_F
    pub uv_norm: f64,
    /// Σ_{s,t} ‖(Y − uvᵀ)_{st}‖_F
    pub block_residual_sum: f64,
    /// ‖uvᵀ − Y‖_F / ‖uvᵀ‖_F
    pub real_eps: f64,
    /// √2·real_eps, a bound on residual/uv_norm
    pub certified_eps: f64,
    /// largest |⟨W^j, X⟩|
    pub membership_residual: f64,
}

impl ComplexCandidate {
    pub fn relative_residual(&self) -> f64 {
        self.residual / self.uv_norm
    }
}

/// Lifts a real candidate for 𝒴 (or a gauge-fixed part of it) back to W_c.
pub fn lift_real_solution(cand: &RankOneCandidate, y: &SubspaceBasis, wc: &ComplexSubspace) -> Result<ComplexCandidate> {
    let n = wc.n;
    if y.n != 2 * n || cand.u0.len() != 2 * n || cand.v0.len() != 2 * n {
        return Err(Error::DimensionMismatch { expected: 2 * n, got: cand.u0.len() });
    }
    let l = Matrix::outer(&cand.u0, &cand.v0);
    let uv_norm = l.frobenius_norm();
    if !(uv_norm > 0.0) {
        return Err(Error::ZeroCandidate);
    }
    let yp = y.project(&l)?;
    let block = |m: &Matrix, s: usize, t: usize| {
        let mut b = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = m[(s * n + i, t * n + j)];
            }
        }
        b
    };
    let phi = |m: &Matrix| -> Result<(Matrix, Matrix)> {
        Ok((block(m, 0, 0).add(&block(m, 1, 1))?, block(m, 1, 0).sub(&block(m, 0, 1))?))
    };
    let (x_re, x_im) = phi(&yp)?;
    let err = yp.sub(&l)?;
    let (e_re, e_im) = phi(&err)?;
    let residual = (e_re.frobenius_dot(&e_re) + e_im.frobenius_dot(&e_im)).sqrt();
    let block_residual_sum: f64 = (0..4).map(|k| block(&err, k / 2, k % 2).frobenius_norm()).sum();
    let real_eps = err.frobenius_norm() / uv_norm;
    let tol = 1e-10 * (1.0 + uv_norm);
    if residual > block_residual_sum + tol {
        return Err(Error::ContractViolated(format!(
            "complex residual {residual} exceeds block residual sum {block_residual_sum}"
        )));
    }
    let membership_residual = wc.residual(&x_re, &x_im);
    let (u_re, u_im) = (cand.u0[..n].to_vec(), cand.u0[n..].to_vec());
    let (v_re, v_im) = (cand.v0[..n].to_vec(), cand.v0[n..].to_vec());
    Ok(ComplexCandidate {
        u_re,
        u_im,
        v_re,
        v_im,
        x_re,
        x_im,
        residual,
        uv_norm,
        block_residual_sum,
        real_eps,
        certified_eps: std::f64::consts::SQRT_2 * real_eps,
        membership_residual,
    })
}

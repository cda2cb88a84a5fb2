//! Iterative structure theorem: reweight until the second moment is close to
//! a rank-one matrix built from the mean.
//!
//! All loops are generic over [`Measure`] and accumulate one composite
//! [`SquareWeight`]; `weight.expand()` gives the dense reweighting polynomial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eig, Matrix, OrthoBasis};
use crate::measure::{Measure, SquareWeight};
use crate::pseudodist::Tolerances;
use crate::reweighting::{fix_subspace, projected_norm_sq, SubspaceFixConfig, SubspaceFixReport};

const EIG_TOL: f64 = 1e-12;
const SPAN_DROP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureConfig {
    pub eps: f64,
    pub max_iters: usize,
    /// degrees one progress step may spend on a pseudo-distribution; 0 picks
    /// a default from the remaining degree
    pub per_iter_degree: usize,
    /// subspace fixing accuracy
    pub delta: f64,
    pub seed: u64,
}

impl StructureConfig {
    pub fn new(eps: f64) -> Self {
        StructureConfig { eps, max_iters: 200, per_iter_degree: 0, delta: (eps / 2.0).min(0.5), seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::PreconditionViolated(format!("ε = {} outside (0,1)", self.eps)));
        }
        if self.max_iters == 0 {
            return Err(Error::PreconditionViolated("max_iters = 0".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::PreconditionViolated(format!("δ = {} outside (0,1)", self.delta)));
        }
        Ok(())
    }

    /// ⌈40 ln n / ε⌉
    pub fn iteration_bound(&self, n: usize) -> usize {
        (40.0 * (n.max(1) as f64).ln() / self.eps).ceil() as usize
    }

    fn subspace_config<M: Measure>(&self, mu: &M, dim: usize, steps: usize) -> SubspaceFixConfig {
        let mut cfg = SubspaceFixConfig { delta: self.delta, ..Default::default() };
        if let Some(deg) = mu.degree() {
            let budget = if self.per_iter_degree > 0 {
                self.per_iter_degree
            } else {
                (2 * cfg.default_k(dim) + 4).min(deg.saturating_sub(2) / steps.max(1))
            };
            cfg.degree_budget = Some(budget);
        }
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    /// state before any reweighting
    Start,
    /// top covariance eigenvectors together with the mean direction
    Progress,
    /// 2-D first phase: top second-moment eigenvectors
    Initial,
    /// 2-D progress step built from the part orthogonal to the mean
    Orthogonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub kind: StepKind,
    /// coordinate block reweighted in this step (2-D only)
    pub coordinate: Option<usize>,
    /// ‖Ẽx‖² per block after the step
    pub mean_norm_sq: Vec<f64>,
    /// ‖Ẽxxᵀ − (Ẽx)(Ẽx)ᵀ‖_F per block after the step
    pub cov_frob: Vec<f64>,
    pub degree_remaining: Option<usize>,
    pub subspace_dim: usize,
    /// Ẽ‖Π_S x‖² before fixing
    pub subspace_mass: f64,
    pub achieved: f64,
    pub samples_tried: usize,
}

impl IterRecord {
    /// ∏ ‖Ẽxᵢ‖²
    pub fn potential(&self) -> f64 {
        self.mean_norm_sq.iter().product()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureTrace {
    pub records: Vec<IterRecord>,
    /// progress steps taken
    pub iterations: usize,
    /// ‖Ẽuvᵀ − m₁m₂ᵀ‖_F after halting (2-D only)
    pub cross_frob: Option<f64>,
    /// √(‖C₁‖_F‖C₂‖_F), which bounds `cross_frob`
    pub cross_bound: Option<f64>,
}

/// (‖Ẽx‖², ‖Ẽxxᵀ − (Ẽx)(Ẽx)ᵀ‖_F, covariance, mean)
fn block_state<M: Measure>(mu: &M, vars: &[usize]) -> (f64, f64, Matrix, Vec<f64>) {
    let m = mu.mean(vars);
    let c = mu.covariance(vars).symmetrize();
    (linalg::dot(&m, &m), c.frobenius_norm(), c, m)
}

fn stop_slack() -> f64 {
    10.0 * Tolerances::default().eps_con
}

/// ‖Ẽxxᵀ − (Ẽx)(Ẽx)ᵀ‖_F ≤ ε‖Ẽx‖² on the block `vars`
pub fn stopping_condition<M: Measure>(mu: &M, vars: &[usize], eps: f64) -> bool {
    let (mn, cf, _, _) = block_state(mu, vars);
    cf <= eps * mn + stop_slack()
}

fn top_vectors(a: &Matrix, count: usize) -> Result<Vec<Vec<f64>>> {
    let eig = sym_eig(&a.symmetrize(), EIG_TOL)?;
    Ok((0..count.min(a.rows)).map(|j| eig.vector(j)).collect())
}

fn record<M: Measure>(mu: &M, blocks: &[&[usize]], iter: usize, kind: StepKind) -> IterRecord {
    let states: Vec<_> = blocks.iter().map(|b| block_state(mu, b)).collect();
    IterRecord {
        iter,
        kind,
        coordinate: None,
        mean_norm_sq: states.iter().map(|s| s.0).collect(),
        cov_frob: states.iter().map(|s| s.1).collect(),
        degree_remaining: mu.degree(),
        subspace_dim: 0,
        subspace_mass: 0.0,
        achieved: 0.0,
        samples_tried: 0,
    }
}

fn fill_step(r: &mut IterRecord, dim: usize, mass: f64, rep: &SubspaceFixReport) {
    r.subspace_dim = dim;
    r.subspace_mass = mass;
    r.achieved = rep.achieved;
    r.samples_tried = rep.samples_tried;
}

/// Maps a subspace fix that fell short of 1−δ to the right error: a capped
/// exponent means the degree budget is too small.
fn shortfall(rep: &SubspaceFixReport, cfg: &SubspaceFixConfig, dim: usize, what: &str) -> Error {
    let want = cfg.k.unwrap_or_else(|| cfg.default_k(dim));
    if rep.k < want {
        Error::DegreeExhausted { needed: 2 * want + 2, available: rep.degree_spent }
    } else {
        Error::ContractViolated(format!("{what}: achieved {} < 1 − δ", rep.achieved))
    }
}

/// One progress step on the block `vars`.
///
/// S′ is the span of the top ⌈√n⌉+1 covariance eigenvectors and the mean
/// direction; fixing inside S′ raises ‖Ẽx‖² by at least (1+ε/4) and above
/// Ẽ‖x‖²/(4√n).
pub fn making_progress_step<M: Measure>(
    mu: &M,
    vars: &[usize],
    cfg: &StructureConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(M, SquareWeight, IterRecord)> {
    cfg.validate()?;
    let n = vars.len();
    let eps = cfg.eps;
    let (mn, cf, cov, m) = block_state(mu, vars);
    if cf <= eps * mn + stop_slack() {
        return Err(Error::PreconditionViolated(format!(
            "stopping condition already holds: {cf} ≤ {eps}·{mn}"
        )));
    }
    let mut span = top_vectors(&cov, linalg::top_count_symmetric(n))?;
    if mn > 0.0 {
        span.push(m.clone());
    }
    let s = OrthoBasis::from_spanning(n, &span, SPAN_DROP)?;
    let q = projected_norm_sq(mu.num_vars(), vars, &s);
    let mass = mu.expect(&q)?;
    let tol = stop_slack();
    if mass < (1.0 + eps) * mn - tol {
        return Err(Error::ContractViolated(format!(
            "subspace mass {mass} below (1+ε)‖Ẽx‖² = {}",
            (1.0 + eps) * mn
        )));
    }
    let sub = cfg.subspace_config(mu, s.len(), cfg.max_iters);
    let (out, w, rep) = fix_subspace(mu, vars, &s, &sub, rng)?;
    if rep.achieved < 1.0 - cfg.delta {
        return Err(shortfall(&rep, &sub, s.len(), "progress step"));
    }
    let trace = mu.second_moment(vars).trace();
    let (new_mn, _, _, _) = block_state(&out, vars);
    let floor = trace / (4.0 * (n as f64).sqrt());
    let grow = (1.0 + eps / 4.0) * mn;
    if new_mn < grow.max(floor) * (1.0 - 1e-9) - tol {
        return Err(Error::ContractViolated(format!(
            "‖Ẽx‖² grew to {new_mn}, below max((1+ε/4)·{mn}, {floor})"
        )));
    }
    let mut r = record(&out, &[vars], 0, StepKind::Progress);
    fill_step(&mut r, s.len(), mass, &rep);
    Ok((out, w, r))
}

/// Repeats progress steps until the stopping condition holds on `vars`.
pub fn run_structure<M: Measure>(
    mu: &M,
    vars: &[usize],
    cfg: &StructureConfig,
) -> Result<(M, SquareWeight, StructureTrace)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cur = mu.clone();
    let mut weight = SquareWeight::one(mu.num_vars());
    let mut trace = StructureTrace { records: vec![record(mu, &[vars], 0, StepKind::Start)], ..Default::default() };
    let mut iter = 0;
    while !stopping_condition(&cur, vars, cfg.eps) {
        if iter >= cfg.max_iters {
            return Err(Error::IterLimit { limit: cfg.max_iters });
        }
        let (next, w, mut r) = making_progress_step(&cur, vars, cfg, &mut rng)?;
        iter += 1;
        r.iter = iter;
        trace.records.push(r);
        cur = next;
        weight = weight.times(&w);
    }
    trace.iterations = iter;
    Ok((cur, weight, trace))
}

/// Progress step for one coordinate of a pair: top ⌈2√n⌉ eigenvectors of
/// Ẽu⊥u⊥ᵀ (u⊥ the part of u orthogonal to the mean) plus the mean
/// direction. Falls back to the covariance subspace if that span does not
/// carry (1+ε)‖Ẽu‖².
fn orthogonal_step<M: Measure>(
    mu: &M,
    vars: &[usize],
    cfg: &StructureConfig,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(M, SquareWeight, usize, f64, SubspaceFixReport, StepKind)> {
    let n = vars.len();
    let (mn, _, cov, m) = block_state(mu, vars);
    let mut kind = StepKind::Orthogonal;
    let second = mu.second_moment(vars);
    let proj_perp = if mn > 0.0 {
        Matrix::identity(n).sub(&Matrix::outer(&m, &m).scale(1.0 / mn))?
    } else {
        Matrix::identity(n)
    };
    let perp = proj_perp.matmul(&second)?.matmul(&proj_perp)?;
    let count = two_d_count(n);
    let mut span = top_vectors(&perp, count)?;
    if mn > 0.0 {
        span.push(m.clone());
    }
    let mut s = OrthoBasis::from_spanning(n, &span, SPAN_DROP)?;
    let mut mass = mu.expect(&projected_norm_sq(mu.num_vars(), vars, &s))?;
    if mass < (1.0 + cfg.eps) * mn - stop_slack() {
        let mut span = top_vectors(&cov, linalg::top_count_symmetric(n))?;
        if mn > 0.0 {
            span.push(m);
        }
        s = OrthoBasis::from_spanning(n, &span, SPAN_DROP)?;
        mass = mu.expect(&projected_norm_sq(mu.num_vars(), vars, &s))?;
        kind = StepKind::Progress;
    }
    let sub = cfg.subspace_config(mu, s.len(), steps);
    let (out, w, rep) = fix_subspace(mu, vars, &s, &sub, rng)?;
    if rep.achieved < 1.0 - cfg.delta {
        return Err(shortfall(&rep, &sub, s.len(), "2-D progress step"));
    }
    Ok((out, w, s.len(), mass, rep, kind))
}

/// ⌈2√n⌉ capped at n
pub fn two_d_count(n: usize) -> usize {
    ((2.0 * (n as f64).sqrt()).ceil() as usize).min(n)
}

/// Structure theorem for a pair (u, v): afterwards each block satisfies
/// ‖mᵢmᵢᵀ − Ẽuᵢuᵢᵀ‖_F ≤ ε‖mᵢ‖².
///
/// If the pair already satisfies this nothing is spent. Otherwise a first
/// phase fixes each block in its top ⌈2√n⌉ second-moment eigenspace, then
/// progress steps run on whichever block still fails. One iteration is the
/// first phase or one progress step.
pub fn run_structure_2d<M: Measure>(
    mu: &M,
    u_vars: &[usize],
    v_vars: &[usize],
    cfg: &StructureConfig,
) -> Result<(M, SquareWeight, StructureTrace)> {
    cfg.validate()?;
    let blocks: [&[usize]; 2] = [u_vars, v_vars];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cur = mu.clone();
    let mut weight = SquareWeight::one(mu.num_vars());
    let mut trace = StructureTrace { records: vec![record(mu, &blocks, 0, StepKind::Start)], ..Default::default() };
    let holds = |m: &M, i: usize| stopping_condition(m, blocks[i], cfg.eps);
    // two fixes per iteration
    let steps = 2 * cfg.max_iters;
    let mut iter = 0;
    if !(holds(&cur, 0) && holds(&cur, 1)) {
        iter = 1;
        for (i, vars) in blocks.iter().enumerate() {
            let n = vars.len();
            let second = cur.second_moment(vars);
            let s = OrthoBasis::from_spanning(n, &top_vectors(&second, two_d_count(n))?, SPAN_DROP)?;
            let mass = cur.expect(&projected_norm_sq(cur.num_vars(), vars, &s))?;
            let sub = cfg.subspace_config(&cur, s.len(), steps);
            let (next, w, rep) = fix_subspace(&cur, vars, &s, &sub, &mut rng)?;
            let mut r = record(&next, &blocks, 1, StepKind::Initial);
            r.coordinate = Some(i);
            fill_step(&mut r, s.len(), mass, &rep);
            trace.records.push(r);
            cur = next;
            weight = weight.times(&w);
        }
    }
    loop {
        let failing: Vec<usize> = (0..2).filter(|&i| !holds(&cur, i)).collect();
        if failing.is_empty() {
            break;
        }
        if iter >= cfg.max_iters {
            return Err(Error::IterLimit { limit: cfg.max_iters });
        }
        iter += 1;
        for i in failing {
            if holds(&cur, i) {
                continue;
            }
            let (next, w, dim, mass, rep, kind) = orthogonal_step(&cur, blocks[i], cfg, steps, &mut rng)?;
            let mut r = record(&next, &blocks, iter, kind);
            r.coordinate = Some(i);
            fill_step(&mut r, dim, mass, &rep);
            trace.records.push(r);
            cur = next;
            weight = weight.times(&w);
        }
    }
    trace.iterations = iter;
    let (cross, bound) = cross_term(&cur, u_vars, v_vars)?;
    trace.cross_frob = Some(cross);
    trace.cross_bound = Some(bound);
    Ok((cur, weight, trace))
}

/// (‖Ẽuvᵀ − m₁m₂ᵀ‖_F, √(‖C₁‖_F‖C₂‖_F)); the first never exceeds the second
/// for a measure whose joint degree-2 moment matrix is PSD.
pub fn cross_term<M: Measure>(mu: &M, u_vars: &[usize], v_vars: &[usize]) -> Result<(f64, f64)> {
    let mut all = u_vars.to_vec();
    all.extend_from_slice(v_vars);
    let c = mu.covariance(&all);
    let (a, b) = (u_vars.len(), v_vars.len());
    let mut cross = 0.0;
    let mut cu = 0.0;
    let mut cv = 0.0;
    for i in 0..a + b {
        for j in 0..a + b {
            let x = c[(i, j)] * c[(i, j)];
            match (i < a, j < a) {
                (true, false) => cross += x,
                (true, true) => cu += x,
                (false, false) => cv += x,
                _ => {}
            }
        }
    }
    Ok((cross.sqrt(), (cu.sqrt() * cv.sqrt()).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRReport {
    /// Ẽuᵢ per block
    pub means: Vec<Vec<f64>>,
    /// Σᵢ‖mᵢmᵢᵀ − Ẽuᵢuᵢᵀ‖²_F
    pub lhs: f64,
    /// ε²Σᵢ‖mᵢ‖⁴
    pub rhs_per_block: f64,
    /// ε²(Σᵢ‖mᵢ‖²)²
    pub rhs_concatenated: f64,
}

impl RankRReport {
    pub fn per_block_holds(&self) -> bool {
        self.lhs <= self.rhs_per_block + stop_slack()
    }

    pub fn concatenated_holds(&self) -> bool {
        self.lhs <= self.rhs_concatenated + stop_slack()
    }
}

/// Rank-r variant: treat (u₁,…,u_r) as one vector, run the symmetric loop,
/// and split the result per block.
pub fn run_structure_rank_r<M: Measure>(
    mu: &M,
    blocks: &[Vec<usize>],
    cfg: &StructureConfig,
) -> Result<(M, SquareWeight, StructureTrace, RankRReport)> {
    let all: Vec<usize> = blocks.iter().flatten().copied().collect();
    let (out, w, trace) = run_structure(mu, &all, cfg)?;
    let mut means = Vec::new();
    let mut lhs = 0.0;
    let mut sq = 0.0;
    let mut quart = 0.0;
    for b in blocks {
        let (mn, cf, _, m) = block_state(&out, b);
        lhs += cf * cf;
        sq += mn;
        quart += mn * mn;
        means.push(m);
    }
    let e2 = cfg.eps * cfg.eps;
    let report = RankRReport { means, lhs, rhs_per_block: e2 * quart, rhs_concatenated: e2 * sq * sq };
    Ok((out, w, trace, report))
}

//! Semidefinite feasibility for moment problems.
//!
//! A problem asks for moments y (one per monomial of degree ≤ d) satisfying
//! linear equalities and making every localizing moment matrix PSD. The solver
//! eliminates the equalities exactly (row reduction), then runs
//! Douglas–Rachford splitting between the affine set of block matrices and the
//! PSD cone, with an optional trace penalty.
//!
//! When the problem is invariant under flipping the sign of every variable in
//! a group (all constraints parity-homogeneous), the group average of any
//! feasible point is feasible and has zero moments of odd group parity. Such
//! moments are then fixed at 0 and moment matrices split into parity blocks.
//!
//! # External solver protocol
//!
//! [`to_triplets`] writes the compiled problem as text:
//!
//! ```text
//! SDP <num_vars> <degree>
//! MOMENTS <count>
//! EQ <rows> <nnz>
//! <row> <moment> <coef>        (nnz lines)
//! RHS
//! <value>                      (rows lines)
//! BLOCK <index> <size> <nnz>
//! <i> <j> <moment> <coef>      (entry (i,j), i ≤ j, gets coef·y[moment])
//! ```
//!
//! with one `BLOCK` section per PSD block. A solver replies on stdout with
//! `MOMENTS <count>` and one line of values (or `INFEASIBLE`); see
//! [`solve_external`].

use std::fmt::Write as _;
use std::io::Write as _;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::poly::{MonomialIndex, Polynomial};
use crate::pseudodist::{ConstraintKind, ConstraintSpec, PseudoDistribution};

const RANK_TOL: f64 = 1e-10;

/// Σ coef·moment[index] = rhs
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFunctional {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub degree: usize,
    /// always starts with Ẽ1 = 1
    pub equalities: Vec<LinearFunctional>,
    /// localizers; the constant 1 gives the moment matrix
    pub psd_blocks: Vec<Polynomial>,
    /// sign-flip symmetry groups, used only if every constraint respects them
    pub sign_groups: Vec<Vec<usize>>,
    /// constraint specs carried to the returned pseudo-distribution
    pub constraints: Vec<ConstraintSpec>,
}

impl SdpProblem {
    pub fn new(num_vars: usize, degree: usize) -> Self {
        SdpProblem {
            num_vars,
            degree,
            equalities: vec![LinearFunctional { terms: vec![(0, 1.0)], rhs: 1.0 }],
            psd_blocks: vec![Polynomial::constant(num_vars, 1.0)],
            sign_groups: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn index(&self) -> std::sync::Arc<MonomialIndex> {
        MonomialIndex::shared(self.num_vars, self.degree)
    }

    /// {q = 0} becomes Ẽ[q·m] = 0 for every monomial m with deg(q·m) ≤ d;
    /// {q ≥ 0} becomes a localizing block.
    pub fn add_constraint(&mut self, c: ConstraintSpec) -> Result<()> {
        let dq = c.polynomial.degree();
        if c.polynomial.num_vars != self.num_vars {
            return Err(Error::DimensionMismatch { expected: self.num_vars, got: c.polynomial.num_vars });
        }
        if dq > self.degree {
            return Err(Error::DegreeExceeded { needed: dq, available: self.degree });
        }
        match c.kind {
            ConstraintKind::Equality => {
                let idx = self.index();
                let q: Vec<(usize, f64)> = c.polynomial.terms().collect();
                for m in 0..idx.count_upto(self.degree - dq) {
                    let em = idx.exponents(m);
                    let terms = q.iter().map(|&(g, coef)| (idx.rank_sum(em, idx.exponents(g)), coef)).collect();
                    self.equalities.push(LinearFunctional { terms, rhs: 0.0 });
                }
            }
            ConstraintKind::Inequality => self.psd_blocks.push(c.polynomial.clone()),
        }
        self.constraints.push(c);
        Ok(())
    }

    pub fn add_equality(&mut self, f: LinearFunctional) {
        self.equalities.push(f);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub iter_limit: usize,
    /// weight of the trace penalty (0 = pure feasibility)
    pub trace_weight: f64,
    /// iterations without 1% progress before declaring infeasibility
    pub stall_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-7, iter_limit: 50_000, trace_weight: 0.0, stall_window: 500 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Feasible,
    Infeasible,
    IterLimit,
}

/// W ⪰ 0 with ⟨W, X⟩ = value < 0 on the whole affine set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfeasibilityWitness {
    pub norm: f64,
    /// ⟨W, X⟩ for X in the affine set, W normalized
    pub value: f64,
    /// ‖component of W along the affine directions‖, W normalized
    pub leak: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolverStatus,
    pub iterations: usize,
    pub max_constraint_residual: f64,
    pub min_block_eigenvalue: f64,
    pub gap: f64,
    pub symmetry_reduced: bool,
    pub witness: Option<InfeasibilityWitness>,
}

#[derive(Clone, Debug)]
pub struct SdpOutcome {
    pub distribution: Option<PseudoDistribution>,
    pub report: SolverReport,
}

/// A PSD block whose packed entries are sparse combinations of the unknowns.
#[derive(Clone, Debug)]
struct Block {
    size: usize,
    /// packed upper triangle (row-major, i ≤ j); off-diagonal scaled by √2
    entries: Vec<Vec<(usize, f64)>>,
}

/// Generic problem: find y with R y = b and every block PSD.
#[derive(Clone, Debug)]
struct LinearPsd {
    nvar: usize,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
    blocks: Vec<Block>,
}

fn packed_len(s: usize) -> usize {
    s * (s + 1) / 2
}

fn pack(m: &Matrix, out: &mut [f64]) {
    let s = m.rows;
    let mut p = 0;
    for i in 0..s {
        out[p] = m[(i, i)];
        p += 1;
        for j in i + 1..s {
            out[p] = m[(i, j)] * std::f64::consts::SQRT_2;
            p += 1;
        }
    }
}

fn unpack(v: &[f64], s: usize) -> Matrix {
    let mut m = Matrix::zeros(s, s);
    let mut p = 0;
    for i in 0..s {
        m[(i, i)] = v[p];
        p += 1;
        for j in i + 1..s {
            let x = v[p] / std::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            p += 1;
        }
    }
    m
}

struct Compiled {
    engine: LinearPsd,
    /// moment index of each unknown
    var_moment: Vec<usize>,
    reduced: bool,
}

fn parity_class(e: &[u16], groups: &[Vec<usize>]) -> u64 {
    let mut c = 0u64;
    for (g, vars) in groups.iter().enumerate() {
        let deg: usize = vars.iter().map(|&v| e[v] as usize).sum();
        c |= ((deg & 1) as u64) << g;
    }
    c
}

fn compile(p: &SdpProblem) -> Result<Compiled> {
    if p.psd_blocks.is_empty() {
        return Err(Error::IllFormed("problem has no PSD block".into()));
    }
    let idx = p.index();
    let n_mom = idx.count_upto(p.degree);
    for f in &p.equalities {
        if let Some(&(i, _)) = f.terms.iter().find(|(i, _)| *i >= n_mom) {
            return Err(Error::IllFormed(format!("functional refers to moment {i} beyond degree {}", p.degree)));
        }
    }
    if p.sign_groups.len() > 63 {
        return Err(Error::IllFormed("too many sign groups".into()));
    }
    let groups = &p.sign_groups;
    let class_of = |i: usize| parity_class(idx.exponents(i), groups);
    let mut reduced = !groups.is_empty();
    if reduced {
        for f in &p.equalities {
            let mut classes = f.terms.iter().filter(|t| t.1 != 0.0).map(|t| class_of(t.0));
            if let Some(c0) = classes.next() {
                if classes.any(|c| c != c0) || (c0 != 0 && f.rhs != 0.0) {
                    reduced = false;
                    break;
                }
            }
        }
        for q in &p.psd_blocks {
            if q.terms().any(|(i, _)| class_of(i) != 0) {
                reduced = false;
            }
        }
    }
    let mut var_of = vec![usize::MAX; n_mom];
    let mut var_moment = Vec::new();
    for (i, slot) in var_of.iter_mut().enumerate() {
        if !reduced || class_of(i) == 0 {
            *slot = var_moment.len();
            var_moment.push(i);
        }
    }
    let mut rows = Vec::new();
    for f in &p.equalities {
        let terms: Vec<(usize, f64)> =
            f.terms.iter().filter(|t| var_of[t.0] != usize::MAX).map(|&(i, c)| (var_of[i], c)).collect();
        if terms.is_empty() && f.rhs == 0.0 {
            continue;
        }
        rows.push((terms, f.rhs));
    }
    let mut blocks = Vec::new();
    for q in &p.psd_blocks {
        let dq = q.degree();
        if dq > p.degree {
            return Err(Error::DegreeExceeded { needed: dq, available: p.degree });
        }
        let h = (p.degree - dq) / 2;
        let qt: Vec<(usize, f64)> = q.terms().collect();
        let n = idx.count_upto(h);
        let mut by_class: Vec<(u64, Vec<usize>)> = Vec::new();
        for a in 0..n {
            let c = if reduced { class_of(a) } else { 0 };
            match by_class.iter_mut().find(|(k, _)| *k == c) {
                Some((_, v)) => v.push(a),
                None => by_class.push((c, vec![a])),
            }
        }
        for (_, mons) in by_class {
            let s = mons.len();
            let mut entries = Vec::with_capacity(packed_len(s));
            for (ia, &a) in mons.iter().enumerate() {
                for &b in &mons[ia..] {
                    let w = if a == b { 1.0 } else { std::f64::consts::SQRT_2 };
                    let (ea, eb) = (idx.exponents(a), idx.exponents(b));
                    let mut e: Vec<(usize, f64)> = Vec::with_capacity(qt.len());
                    for &(g, c) in &qt {
                        let v = var_of[idx.rank_sum3(ea, eb, idx.exponents(g))];
                        debug_assert!(v != usize::MAX);
                        e.push((v, w * c));
                    }
                    entries.push(e);
                }
            }
            blocks.push(Block { size: s, entries });
        }
    }
    Ok(Compiled { engine: LinearPsd { nvar: var_moment.len(), rows, blocks }, var_moment, reduced })
}

/// Affine parametrization y = y0 + Σ z_j dirs_j with A(dirs_j) orthonormal in
/// packed block space and A(y0) orthogonal to them.
struct Affine {
    y0: Vec<f64>,
    a0: Vec<f64>,
    dirs: Vec<Vec<f64>>,
    images: Vec<Vec<f64>>,
}

enum Reduced {
    Consistent(Affine),
    Inconsistent,
}

impl LinearPsd {
    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len() + 1);
        let mut t = 0;
        for b in &self.blocks {
            off.push(t);
            t += packed_len(b.size);
        }
        off.push(t);
        off
    }

    fn apply(&self, y: &[f64], out: &mut [f64]) {
        let mut p = 0;
        for b in &self.blocks {
            for e in &b.entries {
                out[p] = e.iter().map(|&(v, c)| c * y[v]).sum();
                p += 1;
            }
        }
    }

    fn reduce(&self) -> Reduced {
        let nvar = self.nvar;
        // normal equations of the row-normalized system
        let mut gram = vec![0.0; nvar * nvar];
        let mut g = vec![0.0; nvar];
        let mut dense = vec![0.0; nvar];
        for (terms, rhs) in &self.rows {
            let mut nz: Vec<usize> = Vec::with_capacity(terms.len());
            for &(v, c) in terms {
                if dense[v] == 0.0 {
                    nz.push(v);
                }
                dense[v] += c;
            }
            let n2: f64 = nz.iter().map(|&v| dense[v] * dense[v]).sum();
            if n2 > 0.0 {
                for &i in &nz {
                    let di = dense[i] / n2;
                    g[i] += di * rhs;
                    for &j in &nz {
                        gram[i * nvar + j] += di * dense[j];
                    }
                }
            }
            for &v in &nz {
                dense[v] = 0.0;
            }
        }
        // pivoted Cholesky, left-looking; columns l_k over all coordinates
        let mut diag: Vec<f64> = (0..nvar).map(|i| gram[i * nvar + i]).collect();
        let dmax = diag.iter().copied().fold(0.0f64, f64::max);
        let mut piv: Vec<usize> = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut done = vec![false; nvar];
        loop {
            let best = (0..nvar).filter(|&i| !done[i]).max_by(|&a, &b| diag[a].total_cmp(&diag[b]));
            let Some(p) = best else { break };
            if diag[p] <= RANK_TOL * dmax {
                break;
            }
            let dp = diag[p].sqrt();
            let mut l = vec![0.0; nvar];
            for i in 0..nvar {
                if done[i] {
                    continue;
                }
                let mut x = gram[i * nvar + p];
                for c in &cols {
                    x -= c[i] * c[p];
                }
                l[i] = x / dp;
            }
            l[p] = dp;
            done[p] = true;
            for i in 0..nvar {
                if !done[i] {
                    diag[i] -= l[i] * l[i];
                }
            }
            piv.push(p);
            cols.push(l);
        }
        let r = piv.len();
        // G_PP y_P = g_P
        let mut z = vec![0.0; r];
        for a in 0..r {
            let mut x = g[piv[a]];
            for k in 0..a {
                x -= cols[k][piv[a]] * z[k];
            }
            z[a] = x / cols[a][piv[a]];
        }
        let back = |rhs: &mut [f64]| {
            for a in (0..r).rev() {
                let mut x = rhs[a];
                for k in a + 1..r {
                    x -= cols[a][piv[k]] * rhs[k];
                }
                rhs[a] = x / cols[a][piv[a]];
            }
        };
        back(&mut z);
        let mut y0 = vec![0.0; nvar];
        for (a, &p) in piv.iter().enumerate() {
            y0[p] = z[a];
        }
        // null vectors [-L11^{-T} L21^T e_j; e_j]
        let mut null: Vec<Vec<f64>> = Vec::new();
        for j in (0..nvar).filter(|&j| !done[j]) {
            let mut x: Vec<f64> = (0..r).map(|k| -cols[k][j]).collect();
            back(&mut x);
            let mut d = vec![0.0; nvar];
            d[j] = 1.0;
            for (a, &p) in piv.iter().enumerate() {
                d[p] = x[a];
            }
            null.push(d);
        }
        let row_dot = |t: &[(usize, f64)], y: &[f64]| t.iter().map(|&(v, c)| c * y[v]).sum::<f64>();
        let dim = *self.offsets().last().unwrap();
        for (t, b) in &self.rows {
            let scale = t.iter().fold(b.abs(), |m, &(_, c)| m.max(c.abs())).max(1.0);
            if (row_dot(t, &y0) - b).abs() > 1e-7 * scale {
                return Reduced::Inconsistent;
            }
        }
        let mut a0 = vec![0.0; dim];
        self.apply(&y0, &mut a0);
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        let mut images: Vec<Vec<f64>> = Vec::new();
        for mut dense in null {
            let mut img = vec![0.0; dim];
            self.apply(&dense, &mut img);
            let n0 = linalg::norm(&img);
            if n0 == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for (q, qd) in images.iter().zip(&dirs) {
                    let h = linalg::dot(q, &img);
                    linalg::axpy(-h, q, &mut img);
                    linalg::axpy(-h, qd, &mut dense);
                }
            }
            let n1 = linalg::norm(&img);
            if n1 <= 1e-10 * n0 {
                continue;
            }
            for x in img.iter_mut() {
                *x /= n1;
            }
            for x in dense.iter_mut() {
                *x /= n1;
            }
            images.push(img);
            dirs.push(dense);
        }
        for (q, qd) in images.iter().zip(&dirs) {
            let h = linalg::dot(q, &a0);
            linalg::axpy(-h, q, &mut a0);
            linalg::axpy(-h, qd, &mut y0);
        }
        Reduced::Consistent(Affine { y0, a0, dirs, images })
    }
}

impl Affine {
    /// projection of x onto the affine set, and its coordinates z
    fn project(&self, x: &[f64], out: &mut [f64], z: &mut [f64]) {
        out.copy_from_slice(&self.a0);
        for ((q, zj), _) in self.images.iter().zip(z.iter_mut()).zip(0..) {
            *zj = linalg::dot(q, x);
            linalg::axpy(*zj, q, out);
        }
    }

    fn point(&self, z: &[f64]) -> Vec<f64> {
        let mut y = self.y0.clone();
        for (d, zj) in self.dirs.iter().zip(z) {
            linalg::axpy(*zj, d, &mut y);
        }
        y
    }
}

struct EngineResult {
    status: SolverStatus,
    y: Option<Vec<f64>>,
    iterations: usize,
    gap: f64,
    min_eig: f64,
    witness: Option<InfeasibilityWitness>,
}

fn min_block_eig(engine: &LinearPsd, off: &[usize], x: &[f64]) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for (b, blk) in engine.blocks.iter().enumerate() {
        let m = unpack(&x[off[b]..off[b + 1]], blk.size);
        worst = worst.min(linalg::sym_eig(&m, 1e-13)?.min_value());
    }
    Ok(worst)
}

fn run_engine(engine: &LinearPsd, opts: &SolverOptions) -> Result<EngineResult> {
    let affine = match engine.reduce() {
        Reduced::Inconsistent => {
            return Ok(EngineResult {
                status: SolverStatus::Infeasible,
                y: None,
                iterations: 0,
                gap: f64::INFINITY,
                min_eig: f64::NAN,
                witness: None,
            })
        }
        Reduced::Consistent(a) => a,
    };
    let off = engine.offsets();
    let dim = *off.last().unwrap();
    let mut shift = vec![0.0; dim];
    if opts.trace_weight != 0.0 {
        for (b, blk) in engine.blocks.iter().enumerate() {
            let mut p = off[b];
            for i in 0..blk.size {
                shift[p] = opts.trace_weight;
                p += blk.size - i;
            }
        }
    }
    let nz = affine.images.len();
    let mut x = affine.a0.clone();
    let mut a = vec![0.0; dim];
    let mut z = vec![0.0; nz];
    let mut t = vec![0.0; dim];
    let mut k = vec![0.0; dim];
    let mut bases: Vec<Matrix> = engine.blocks.iter().map(|b| Matrix::identity(b.size)).collect();
    let mut best_gap = f64::INFINITY;
    let mut best_at = 0usize;
    let mut gap = f64::INFINITY;
    for it in 1..=opts.iter_limit {
        for i in 0..dim {
            t[i] = x[i] - shift[i];
        }
        affine.project(&t, &mut a, &mut z);
        for i in 0..dim {
            t[i] = 2.0 * a[i] - x[i];
        }
        for (b, blk) in engine.blocks.iter().enumerate() {
            let m = unpack(&t[off[b]..off[b + 1]], blk.size);
            let eig = linalg::sym_eig_warm(&m, 1e-13, &bases[b])?;
            let s = blk.size;
            let mut c = Matrix::zeros(s, s);
            for (j, &lam) in eig.values.iter().enumerate() {
                if lam <= 0.0 {
                    continue;
                }
                for r in 0..s {
                    let vr = eig.vectors[(r, j)] * lam;
                    for q in r..s {
                        c.data[r * s + q] += vr * eig.vectors[(q, j)];
                    }
                }
            }
            for r in 0..s {
                for q in 0..r {
                    c.data[r * s + q] = c.data[q * s + r];
                }
            }
            pack(&c, &mut k[off[b]..off[b + 1]]);
            bases[b] = eig.vectors;
        }
        let mut g2 = 0.0;
        for i in 0..dim {
            let d = k[i] - a[i];
            g2 += d * d;
            x[i] += d;
        }
        gap = g2.sqrt();
        if gap <= opts.tol || (gap <= 10.0 * opts.tol && it % 10 == 0) {
            let me = min_block_eig(engine, &off, &a)?;
            if me >= -opts.tol {
                return Ok(EngineResult {
                    status: SolverStatus::Feasible,
                    y: Some(affine.point(&z)),
                    iterations: it,
                    gap,
                    min_eig: me,
                    witness: None,
                });
            }
        }
        if gap < 0.99 * best_gap {
            best_gap = gap;
            best_at = it;
        } else if gap > 10.0 * opts.tol && it - best_at >= opts.stall_window {
            // a PSD shadow means the iterates are sliding along the feasible set
            if min_block_eig(engine, &off, &a)? >= -opts.tol {
                best_at = it;
                continue;
            }
            let mut w: Vec<f64> = k.iter().zip(&a).map(|(p, q)| p - q).collect();
            let norm = linalg::norm(&w);
            for v in w.iter_mut() {
                *v /= norm;
            }
            let value = linalg::dot(&w, &affine.a0);
            let leak = affine.images.iter().map(|q| linalg::dot(q, &w).powi(2)).sum::<f64>().sqrt();
            let min_eigenvalue = min_block_eig(engine, &off, &w)?;
            return Ok(EngineResult {
                status: SolverStatus::Infeasible,
                y: None,
                iterations: it,
                gap,
                min_eig: min_block_eig(engine, &off, &a)?,
                witness: Some(InfeasibilityWitness { norm, value, leak, min_eigenvalue }),
            });
        }
    }
    Ok(EngineResult {
        status: SolverStatus::IterLimit,
        y: Some(affine.point(&z)),
        iterations: opts.iter_limit,
        gap,
        min_eig: min_block_eig(engine, &off, &a)?,
        witness: None,
    })
}

/// Finds a pseudo-distribution satisfying the problem's constraints.
///
/// Returns the distribution only on `Feasible`. `IterLimit` is a status, not
/// an error, so the caller can decide.
pub fn solve_feasibility(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpOutcome> {
    if !(opts.tol > 0.0) || opts.iter_limit == 0 {
        return Err(Error::IllFormed("tolerance and iteration limit must be positive".into()));
    }
    let compiled = compile(problem)?;
    let res = run_engine(&compiled.engine, opts)?;
    let n_mom = problem.index().count_upto(problem.degree);
    let mut moments = vec![0.0; n_mom];
    if let Some(y) = &res.y {
        for (v, &m) in compiled.var_moment.iter().enumerate() {
            moments[m] = y[v];
        }
    }
    let residual = if res.y.is_some() {
        problem
            .equalities
            .iter()
            .map(|f| (f.terms.iter().map(|&(i, c)| c * moments[i]).sum::<f64>() - f.rhs).abs())
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    let report = SolverReport {
        status: res.status,
        iterations: res.iterations,
        max_constraint_residual: residual,
        min_block_eigenvalue: res.min_eig,
        gap: res.gap,
        symmetry_reduced: compiled.reduced,
        witness: res.witness,
    };
    let distribution = if res.status == SolverStatus::Feasible {
        moments[0] = 1.0;
        Some(PseudoDistribution::from_moments(
            problem.num_vars,
            problem.degree,
            moments,
            problem.constraints.clone(),
        )?)
    } else {
        None
    };
    Ok(SdpOutcome { distribution, report })
}

/// Whether p is a sum of squares: searches for a PSD Gram matrix G with
/// p = zᵀ G z over monomials z of degree ≤ deg(p)/2.
pub fn is_sos(p: &Polynomial, tol: f64) -> Result<bool> {
    let d = p.degree();
    if p.is_zero() {
        return Ok(true);
    }
    if d % 2 == 1 {
        return Ok(false);
    }
    let h = d / 2;
    let idx = MonomialIndex::shared(p.num_vars, d);
    let n = idx.count_upto(h);
    let mut var = vec![vec![0usize; n]; n];
    let mut count = 0;
    for a in 0..n {
        for b in a..n {
            var[a][b] = count;
            var[b][a] = count;
            count += 1;
        }
    }
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = (0..idx.count_upto(d)).map(|g| (Vec::new(), p.coeffs.get(g).copied().unwrap_or(0.0))).collect();
    for a in 0..n {
        for b in a..n {
            let g = idx.rank_sum(idx.exponents(a), idx.exponents(b));
            rows[g].0.push((var[a][b], if a == b { 1.0 } else { 2.0 }));
        }
    }
    let mut entries = Vec::with_capacity(packed_len(n));
    for a in 0..n {
        for b in a..n {
            entries.push(vec![(var[a][b], if a == b { 1.0 } else { std::f64::consts::SQRT_2 })]);
        }
    }
    let scale = p.coeff_norm();
    let rows = rows.into_iter().map(|(t, r)| (t, r / scale)).collect();
    let engine = LinearPsd { nvar: count, rows, blocks: vec![Block { size: n, entries }] };
    let opts = SolverOptions { tol, ..SolverOptions::default() };
    match run_engine(&engine, &opts)?.status {
        SolverStatus::Feasible => Ok(true),
        SolverStatus::Infeasible => Ok(false),
        SolverStatus::IterLimit => Err(Error::SolverIterLimit { iterations: opts.iter_limit }),
    }
}

/// The sparse-triplet text form of a compiled problem.
pub fn to_triplets(problem: &SdpProblem) -> Result<String> {
    let mut s = String::new();
    let n_mom = problem.index().count_upto(problem.degree);
    let _ = writeln!(s, "SDP {} {}", problem.num_vars, problem.degree);
    let _ = writeln!(s, "MOMENTS {n_mom}");
    let nnz: usize = problem.equalities.iter().map(|f| f.terms.len()).sum();
    let _ = writeln!(s, "EQ {} {}", problem.equalities.len(), nnz);
    for (r, f) in problem.equalities.iter().enumerate() {
        for &(i, c) in &f.terms {
            let _ = writeln!(s, "{r} {i} {c}");
        }
    }
    let _ = writeln!(s, "RHS");
    for f in &problem.equalities {
        let _ = writeln!(s, "{}", f.rhs);
    }
    // blocks in moment coordinates, without symmetry reduction
    let plain = SdpProblem { sign_groups: Vec::new(), ..problem.clone() };
    let c = compile(&plain)?;
    for (b, blk) in c.engine.blocks.iter().enumerate() {
        let mut lines = Vec::new();
        let mut p = 0;
        for i in 0..blk.size {
            for j in i..blk.size {
                let w = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                for &(v, coef) in &blk.entries[p] {
                    lines.push(format!("{i} {j} {} {}", c.var_moment[v], coef / w));
                }
                p += 1;
            }
        }
        let _ = writeln!(s, "BLOCK {b} {} {}", blk.size, lines.len());
        for l in lines {
            let _ = writeln!(s, "{l}");
        }
    }
    Ok(s)
}

/// Runs an external solver on the triplet form and validates its answer with
/// the same invariant checks as the built-in solver.
pub fn solve_external(problem: &SdpProblem, command: &str, args: &[String], opts: &SolverOptions) -> Result<SdpOutcome> {
    let text = to_triplets(problem)?;
    let mut child = Command::new(command)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| Error::IllFormed(format!("cannot start {command}: {e}")))?;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(text.as_bytes())
        .map_err(|e| Error::IllFormed(format!("cannot write to {command}: {e}")))?;
    let out = child.wait_with_output().map_err(|e| Error::IllFormed(format!("{command} failed: {e}")))?;
    let reply = String::from_utf8_lossy(&out.stdout);
    let infeasible = || SolverReport {
        status: SolverStatus::Infeasible,
        iterations: 0,
        max_constraint_residual: f64::NAN,
        min_block_eigenvalue: f64::NAN,
        gap: f64::NAN,
        symmetry_reduced: false,
        witness: None,
    };
    if reply.trim_start().starts_with("INFEASIBLE") {
        return Ok(SdpOutcome { distribution: None, report: infeasible() });
    }
    let mut r = crate::textio::Reader::new(&reply);
    let h = r.header("MOMENTS", 1)?;
    let (_, toks) = r.next_tokens()?;
    if toks.len() != h[0] {
        return Err(Error::Parse { line: 2, msg: format!("expected {} moments", h[0]) });
    }
    let moments: Vec<f64> = toks
        .iter()
        .map(|t| t.parse().map_err(|_| Error::Parse { line: 2, msg: format!("not a number: {t}") }))
        .collect::<Result<_>>()?;
    let residual = problem
        .equalities
        .iter()
        .map(|f| (f.terms.iter().map(|&(i, c)| c * moments[i]).sum::<f64>() - f.rhs).abs())
        .fold(0.0, f64::max);
    let mu = PseudoDistribution::from_moments(problem.num_vars, problem.degree, moments, problem.constraints.clone())?;
    let mut min_eig = f64::INFINITY;
    for q in &problem.psd_blocks {
        let m = mu.moment_matrix(Some(q))?;
        min_eig = min_eig.min(linalg::sym_eig(&m, 1e-12)?.min_value());
    }
    let ok = residual <= opts.tol.max(1e-6) && min_eig >= -opts.tol;
    Ok(SdpOutcome {
        distribution: ok.then_some(mu),
        report: SolverReport {
            status: if ok { SolverStatus::Feasible } else { SolverStatus::IterLimit },
            iterations: 0,
            max_constraint_residual: residual,
            min_block_eigenvalue: min_eig,
            gap: f64::NAN,
            symmetry_reduced: false,
            witness: None,
        },
    })
}

/// Moment problem for unit u, v ∈ Rⁿ with uvᵀ ⊥ W^⊥.
///
/// Variables are ordered u₁..uₙ, v₁..vₙ. `complement` is an orthonormal basis
/// of W^⊥ (n×n matrices).
pub fn build_bss_problem(n: usize, complement: &[Matrix], degree: usize) -> Result<SdpProblem> {
    if degree < 4 || degree % 2 == 1 {
        return Err(Error::DegreeTooSmall(degree));
    }
    if n == 0 {
        return Err(Error::BadDims("n must be positive".into()));
    }
    let nv = 2 * n;
    let mut p = SdpProblem::new(nv, degree);
    let us: Vec<usize> = (0..n).collect();
    let vs: Vec<usize> = (n..2 * n).collect();
    p.add_constraint(ConstraintSpec::sphere(nv, &us))?;
    p.add_constraint(ConstraintSpec::sphere(nv, &vs))?;
    for b in complement {
        if b.rows != n || b.cols != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.rows });
        }
        let mut terms = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if b[(i, j)] != 0.0 {
                    let mut e = vec![0u16; nv];
                    e[i] += 1;
                    e[n + j] += 1;
                    terms.push((e, b[(i, j)]));
                }
            }
        }
        let q = Polynomial::from_terms(nv, &terms);
        p.add_constraint(ConstraintSpec::equality(q))?;
    }
    p.sign_groups = vec![us, vs];
    Ok(p)
}

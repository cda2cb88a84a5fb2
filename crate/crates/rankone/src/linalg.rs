//! Dense real linear algebra and Gaussian sampling.
//!
//! Everything here is small and dense: symmetric eigenproblems go through
//! cyclic Jacobi, singular values through one-sided Jacobi.

use std::ops::{Index, IndexMut};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// default relative tolerance for eigendecompositions
pub const EPS_EIG: f64 = 1e-10;
/// relative clipping threshold (times the trace) for Gaussian covariances
pub const EPS_PSD_SAMPLING: f64 = 1e-9;
/// Gram-Schmidt drop tolerance
pub const EPS_DROP: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::IllFormed(format!("non-finite entry {bad}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch { expected: c, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    /// u vᵀ
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Matrix::zeros(u.len(), v.len());
        for (i, &a) in u.iter().enumerate() {
            for (j, &b) in v.iter().enumerate() {
                m.data[i * v.len() + j] = a * b;
            }
        }
        m
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        for (i, &x) in v.iter().enumerate() {
            self.data[i * self.cols + j] = x;
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, got: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        let oc = other.cols;
        for i in 0..self.rows {
            let orow = &mut out.data[i * oc..(i + 1) * oc];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * oc..(k + 1) * oc];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::DimensionMismatch { expected: self.cols, got: x.len() });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// Aᵀx
    pub fn tmatvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.rows != x.len() {
            return Err(Error::DimensionMismatch { expected: self.rows, got: x.len() });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), &mut out);
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// ⟨A, B⟩ = Σ A_ij B_ij
    pub fn frobenius_dot(&self, other: &Matrix) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// (A + Aᵀ)/2
    pub fn symmetrize(&self) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                let s = 0.5 * (self[(i, j)] + self[(j, i)]);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += a x
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Scales `x` to unit length; returns the old norm. Zero vectors are left alone.
pub fn normalize(x: &mut [f64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Eigenvalues in descending order with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEig {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.col(j)
    }

    /// V Λ Vᵀ
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let v = self.vector(k);
            for i in 0..n {
                let a = lam * v[i];
                for j in 0..n {
                    out.data[i * n + j] += a * v[j];
                }
            }
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi.
///
/// `tol` bounds both the accepted asymmetry and the final off-diagonal mass,
/// each relative to ‖A‖_F.
pub fn sym_eig(a: &Matrix, tol: f64) -> Result<SymEig> {
    check_symmetric(a, tol)?;
    let n = a.rows;
    let mut work = a.symmetrize();
    let mut v = Matrix::identity(n);
    jacobi(&mut work, &mut v, tol)?;
    Ok(sorted_eig(&work, v))
}

/// Jacobi started from a previous eigenbasis `start` (orthogonal, n×n).
/// Close to diagonal after the change of basis, so one or two sweeps suffice.
pub fn sym_eig_warm(a: &Matrix, tol: f64, start: &Matrix) -> Result<SymEig> {
    check_symmetric(a, tol)?;
    if start.rows != a.rows || start.cols != a.rows {
        return Err(Error::DimensionMismatch { expected: a.rows, got: start.rows });
    }
    let mut work = start.transpose().matmul(&a.matmul(start)?)?.symmetrize();
    let mut v = start.clone();
    jacobi(&mut work, &mut v, tol)?;
    Ok(sorted_eig(&work, v))
}

fn check_symmetric(a: &Matrix, tol: f64) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.rows, got: a.cols });
    }
    let asym = a.max_asymmetry();
    if asym > tol * a.frobenius_norm().max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

fn off_diagonal(a: &Matrix) -> f64 {
    let n = a.rows;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.data[i * n + j] * a.data[i * n + j];
            }
        }
    }
    s.sqrt()
}

fn jacobi(a: &mut Matrix, v: &mut Matrix, tol: f64) -> Result<()> {
    let n = a.rows;
    let scale = a.frobenius_norm();
    if scale == 0.0 || n < 2 {
        return Ok(());
    }
    for _ in 0..MAX_SWEEPS {
        if off_diagonal(a) <= tol * scale {
            return Ok(());
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.data[p * n + q];
                if apq.abs() <= f64::EPSILON * 1e-3 * scale {
                    continue;
                }
                let app = a.data[p * n + p];
                let aqq = a.data[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.data[k * n + p];
                    let akq = a.data[k * n + q];
                    a.data[k * n + p] = c * akp - s * akq;
                    a.data[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a.data[p * n + k];
                    let aqk = a.data[q * n + k];
                    a.data[p * n + k] = c * apk - s * aqk;
                    a.data[q * n + k] = s * apk + c * aqk;
                }
                a.data[p * n + q] = 0.0;
                a.data[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v.data[k * n + p];
                    let vkq = v.data[k * n + q];
                    v.data[k * n + p] = c * vkp - s * vkq;
                    v.data[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if off_diagonal(a) <= tol * scale {
        Ok(())
    } else {
        Err(Error::NoConvergence { what: "jacobi eigendecomposition" })
    }
}

fn sorted_eig(diag: &Matrix, v: Matrix) -> SymEig {
    let n = diag.rows;
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps index order among ties
    order.sort_by(|&i, &j| diag[(j, j)].total_cmp(&diag[(i, i)]));
    let values = order.iter().map(|&i| diag[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (newj, &oldj) in order.iter().enumerate() {
        for i in 0..n {
            vectors.data[i * n + newj] = v.data[i * n + oldj];
        }
    }
    SymEig { values, vectors }
}

/// Thin singular value decomposition A = U diag(s) Vᵀ with r = min(rows, cols).
#[derive(Clone, Debug)]
pub struct Svd {
    pub s: Vec<f64>,
    /// rows × r, orthonormal columns
    pub u: Matrix,
    /// cols × r, orthonormal columns
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut out = Matrix::zeros(self.u.rows, self.v.rows);
        for (k, &sk) in self.s.iter().enumerate() {
            for i in 0..self.u.rows {
                let a = sk * self.u[(i, k)];
                for j in 0..self.v.rows {
                    out[(i, j)] += a * self.v[(j, k)];
                }
            }
        }
        out
    }
}

/// One-sided Jacobi SVD.
pub fn svd(a: &Matrix) -> Result<Svd> {
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::IllFormed("non-finite entry".into()));
    }
    if a.rows < a.cols {
        let t = svd(&a.transpose())?;
        return Ok(Svd { s: t.s, u: t.v, v: t.u });
    }
    let (m, n) = (a.rows, a.cols);
    // columns of A stored contiguously
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    // columns below this squared norm are rounding noise
    let negligible = 1e-30 * a.data.iter().map(|x| x * x).sum::<f64>();
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence { what: "jacobi svd" });
    }
    let mut sig: Vec<(f64, usize)> = w.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    sig.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let top = sig.first().map_or(0.0, |x| x.0);
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (k, &(sk, j)) in sig.iter().enumerate() {
        s.push(sk);
        vm.set_col(k, &v[j]);
        if sk > 1e-14 * top && sk > 0.0 {
            ucols.push(w[j].iter().map(|x| x / sk).collect());
        } else {
            ucols.push(Vec::new());
        }
    }
    // complete missing left vectors to an orthonormal set
    for k in 0..n {
        if ucols[k].is_empty() {
            ucols[k] = complete_orthonormal(&ucols, m);
        }
        u.set_col(k, &ucols[k]);
    }
    Ok(Svd { s, u, v: vm })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn complete_orthonormal(existing: &[Vec<f64>], m: usize) -> Vec<f64> {
    for e in 0..m {
        let mut x = vec![0.0; m];
        x[e] = 1.0;
        for _ in 0..2 {
            for b in existing.iter().filter(|b| !b.is_empty()) {
                let c = dot(b, &x);
                axpy(-c, b, &mut x);
            }
        }
        if normalize(&mut x) > 1e-6 {
            return x;
        }
    }
    vec![0.0; m]
}

/// Singular values of `a` only.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(a)?.s)
}

/// Draws from N(0, Σ) through the eigen factor of Σ.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    dim: usize,
    /// columns √λ_j v_j for the positive eigenvalues
    factor: Vec<Vec<f64>>,
}

impl GaussianSampler {
    pub fn new(covariance: &Matrix) -> Result<Self> {
        let dim = covariance.rows;
        let eig = sym_eig(&covariance.symmetrize(), EPS_EIG.max(covariance.max_asymmetry()))?;
        let tr = covariance.trace().abs();
        if eig.min_value() < -EPS_PSD_SAMPLING * tr.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPsd { min_eigenvalue: eig.min_value() });
        }
        let factor = eig
            .values
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0.0)
            .map(|(j, &l)| eig.vector(j).into_iter().map(|x| x * l.sqrt()).collect())
            .collect();
        Ok(GaussianSampler { dim, factor })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for f in &self.factor {
            let z: f64 = rng.sample(StandardNormal);
            axpy(z, f, &mut x);
        }
        x
    }
}

/// Σ max(λ_j, 0) v_j v_jᵀ, provided no eigenvalue is below −tol·max(1, |Tr A|).
pub fn psd_clip(a: &Matrix, tol: f64) -> Result<Matrix> {
    let mut eig = sym_eig(&a.symmetrize(), EPS_EIG.max(a.max_asymmetry()))?;
    if eig.min_value() < -tol * a.trace().abs().max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: eig.min_value() });
    }
    for l in eig.values.iter_mut() {
        *l = l.max(0.0);
    }
    Ok(eig.reconstruct())
}

/// One draw from N(0, covariance); negative eigenvalues within the clipping
/// threshold are treated as zero.
pub fn sample_gaussian<R: Rng + ?Sized>(covariance: &Matrix, rng: &mut R) -> Result<Vec<f64>> {
    Ok(GaussianSampler::new(covariance)?.sample(rng))
}

/// Orthonormal basis of a subspace of R^dim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthoBasis {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl OrthoBasis {
    pub fn empty(dim: usize) -> Self {
        OrthoBasis { dim, vectors: Vec::new() }
    }

    pub fn full(dim: usize) -> Self {
        let vectors = (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e
            })
            .collect();
        OrthoBasis { dim, vectors }
    }

    /// Modified Gram-Schmidt (two passes) over a spanning set; vectors whose
    /// residual falls below `drop_tol` times their norm are dropped.
    pub fn from_spanning(dim: usize, spanning: &[Vec<f64>], drop_tol: f64) -> Result<Self> {
        let mut basis = OrthoBasis::empty(dim);
        for x in spanning {
            if x.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
            }
            basis.try_push(x, drop_tol);
        }
        Ok(basis)
    }

    /// Adds the normalized residual of `x` if it is not (numerically) in the span.
    pub fn try_push(&mut self, x: &[f64], drop_tol: f64) -> bool {
        let n0 = norm(x);
        if n0 == 0.0 {
            return false;
        }
        let mut r = x.to_vec();
        for _ in 0..2 {
            for b in &self.vectors {
                let c = dot(b, &r);
                axpy(-c, b, &mut r);
            }
        }
        if norm(&r) <= drop_tol * n0 {
            return false;
        }
        normalize(&mut r);
        self.vectors.push(r);
        true
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// coordinates ⟨b_i, x⟩
    pub fn coordinates(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.vectors.iter().map(|b| dot(b, x)).collect())
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c = self.coordinates(x)?;
        let mut out = vec![0.0; self.dim];
        for (ci, b) in c.iter().zip(&self.vectors) {
            axpy(*ci, b, &mut out);
        }
        Ok(out)
    }

    /// orthonormal basis of the orthogonal complement
    pub fn complement(&self) -> OrthoBasis {
        let mut all = self.clone();
        let start = all.len();
        for i in 0..self.dim {
            if all.len() == self.dim {
                break;
            }
            let mut e = vec![0.0; self.dim];
            e[i] = 1.0;
            all.try_push(&e, 1e-6);
        }
        OrthoBasis { dim: self.dim, vectors: all.vectors.split_off(start) }
    }

    /// largest |⟨b_i, b_j⟩ − δ_ij|
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.vectors.iter().enumerate() {
            for (j, b) in self.vectors.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }
}

/// V Vᵀ x for an orthonormal basis V.
pub fn project_onto(basis: &OrthoBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.project(x)
}

/// For PSD `a` with descending eigenvalues λ and ℓ = ⌈√n⌉+1, returns
/// ((Σ_{i≤ℓ} λ_i)², Σ λ_i²). The first is never smaller than the second.
pub fn top_mass_vs_frobenius(a: &Matrix) -> Result<(f64, f64)> {
    let eig = sym_eig(a, EPS_EIG)?;
    let n = a.rows;
    let l = ((n as f64).sqrt().ceil() as usize + 1).min(n);
    let top: f64 = eig.values[..l].iter().sum();
    let fro: f64 = eig.values.iter().map(|x| x * x).sum();
    Ok((top * top, fro))
}

/// number of leading eigenvectors kept by the symmetric progress step
pub fn top_count_symmetric(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize + 1).min(n)
}

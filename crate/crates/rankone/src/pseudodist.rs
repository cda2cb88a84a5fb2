//! Pseudo-distributions stored as moment vectors.
//!
//! A degree-d pseudo-distribution over m variables is the list of values
//! Ẽ x^α for every monomial of degree ≤ d, in graded-lex order. Reweighting by
//! a sum-of-squares polynomial p maps it to Ẽ' f = Ẽ[p f] / Ẽ p, at the cost of
//! deg p degrees.

use std::fmt::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{self, Matrix};
use crate::poly::{MonomialIndex, Polynomial};
use crate::sdp;
use crate::textio::{self, Reader};

/// Numerical tolerances shared by the pseudo-distribution checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// PSD slack for moment matrices
    pub eps_psd: f64,
    /// residual allowed on equality constraints
    pub eps_con: f64,
    /// smallest admissible normalizer Ẽp
    pub eps_norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { eps_psd: 1e-7, eps_con: 1e-6, eps_norm: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    /// q = 0
    Equality,
    /// q ≥ 0
    Inequality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: ConstraintKind,
    pub polynomial: Polynomial,
}

impl ConstraintSpec {
    pub fn equality(polynomial: Polynomial) -> Self {
        ConstraintSpec { kind: ConstraintKind::Equality, polynomial }
    }

    pub fn inequality(polynomial: Polynomial) -> Self {
        ConstraintSpec { kind: ConstraintKind::Inequality, polynomial }
    }

    /// ‖x_S‖² − 1 = 0 over the listed variables
    pub fn sphere(num_vars: usize, vars: &[usize]) -> Self {
        ConstraintSpec::equality(Polynomial::sum_of_squares_minus(num_vars, vars, 1.0))
    }
}

#[derive(Clone, Debug)]
pub struct PseudoDistribution {
    index: Arc<MonomialIndex>,
    degree: usize,
    moments: Vec<f64>,
    constraints: Vec<ConstraintSpec>,
}

impl PseudoDistribution {
    /// Wraps a moment vector. The constant moment must be 1.
    pub fn from_moments(
        num_vars: usize,
        degree: usize,
        moments: Vec<f64>,
        constraints: Vec<ConstraintSpec>,
    ) -> Result<Self> {
        let index = MonomialIndex::shared(num_vars, degree);
        if moments.len() != index.count_upto(degree) {
            return Err(Error::DimensionMismatch { expected: index.count_upto(degree), got: moments.len() });
        }
        if moments.iter().any(|m| !m.is_finite()) {
            return Err(Error::IllFormed("non-finite moment".into()));
        }
        if (moments[0] - 1.0).abs() > 1e-12 {
            return Err(Error::IllFormed(format!("constant moment is {} (must be 1)", moments[0])));
        }
        let mut moments = moments;
        moments[0] = 1.0;
        Ok(PseudoDistribution { index, degree, moments, constraints })
    }

    pub fn num_vars(&self) -> usize {
        self.index.num_vars()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn index(&self) -> &Arc<MonomialIndex> {
        &self.index
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn with_constraints(mut self, constraints: Vec<ConstraintSpec>) -> Self {
        self.constraints = constraints;
        self
    }

    /// Ẽ f
    pub fn expect(&self, f: &Polynomial) -> Result<f64> {
        pseudo_expect(self, f)
    }

    /// Ẽ x^e
    pub fn moment(&self, e: &[u16]) -> Result<f64> {
        let d: usize = e.iter().map(|&x| x as usize).sum();
        if d > self.degree {
            return Err(Error::DegreeExceeded { needed: d, available: self.degree });
        }
        Ok(self.moments[self.index.rank(e)])
    }

    /// Ẽ x restricted to `vars`
    pub fn mean(&self, vars: &[usize]) -> Vec<f64> {
        let m = self.num_vars();
        vars.iter()
            .map(|&v| {
                let mut e = vec![0u16; m];
                e[v] = 1;
                self.moments[self.index.rank(&e)]
            })
            .collect()
    }

    /// Ẽ x xᵀ restricted to `vars`
    pub fn second_moment(&self, vars: &[usize]) -> Matrix {
        let m = self.num_vars();
        let k = vars.len();
        let mut out = Matrix::zeros(k, k);
        for (a, &va) in vars.iter().enumerate() {
            for (b, &vb) in vars.iter().enumerate() {
                let mut e = vec![0u16; m];
                e[va] += 1;
                e[vb] += 1;
                out[(a, b)] = self.moments[self.index.rank(&e)];
            }
        }
        out
    }

    /// Ẽ(x − Ẽx)(x − Ẽx)ᵀ restricted to `vars`
    pub fn covariance(&self, vars: &[usize]) -> Matrix {
        let mean = self.mean(vars);
        let mut c = self.second_moment(vars);
        for i in 0..vars.len() {
            for j in 0..vars.len() {
                c[(i, j)] -= mean[i] * mean[j];
            }
        }
        c
    }

    /// same moments up to a lower degree
    pub fn truncate(&self, degree: usize) -> Result<Self> {
        if degree > self.degree {
            return Err(Error::DegreeExceeded { needed: degree, available: self.degree });
        }
        Ok(PseudoDistribution {
            index: self.index.clone(),
            degree,
            moments: self.moments[..self.index.count_upto(degree)].to_vec(),
            constraints: self.constraints.iter().filter(|c| c.polynomial.degree() <= degree).cloned().collect(),
        })
    }

    /// Univariate pseudo-distribution of the linear form ℓ(x) = Σ a_i x_i + c:
    /// moments Ẽ ℓ^j for j ≤ degree.
    pub fn restrict_to_form(&self, form: &Polynomial, degree: usize) -> Result<Self> {
        if form.degree() > 1 {
            return Err(Error::IllFormed("restriction needs a linear form".into()));
        }
        if degree > self.degree {
            return Err(Error::DegreeExceeded { needed: degree, available: self.degree });
        }
        let mut moments = Vec::with_capacity(degree + 1);
        let mut power = Polynomial::constant(self.num_vars(), 1.0);
        for j in 0..=degree {
            if j > 0 {
                power = power.mul(form);
            }
            moments.push(self.expect(&power)?);
        }
        moments[0] = 1.0;
        PseudoDistribution::from_moments(1, degree, moments, Vec::new())
    }

    /// M_{α,β} = Ẽ[q x^{α+β}] over monomials of degree ≤ ⌊(d − deg q)/2⌋.
    pub fn moment_matrix(&self, localizer: Option<&Polynomial>) -> Result<Matrix> {
        moment_matrix(self, localizer)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "PD {} {}", self.num_vars(), self.degree);
        let row = Matrix { rows: 1, cols: self.moments.len(), data: self.moments.clone() };
        textio::write_matrix(&mut s, &row);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let h = r.header("PD", 2)?;
        let m = r.matrix()?;
        if m.rows != 1 {
            return Err(Error::Parse { line: 2, msg: "moments must be a single row".into() });
        }
        PseudoDistribution::from_moments(h[0], h[1], m.data, Vec::new())
    }
}

/// Σ_α f_α Ẽ x^α
pub fn pseudo_expect(mu: &PseudoDistribution, f: &Polynomial) -> Result<f64> {
    if f.num_vars != mu.num_vars() {
        return Err(Error::DimensionMismatch { expected: mu.num_vars(), got: f.num_vars });
    }
    let d = f.degree();
    if d > mu.degree {
        return Err(Error::DegreeExceeded { needed: d, available: mu.degree });
    }
    Ok(f.terms().map(|(i, c)| c * mu.moments[i]).sum())
}

pub fn moment_matrix(mu: &PseudoDistribution, localizer: Option<&Polynomial>) -> Result<Matrix> {
    let one = Polynomial::constant(mu.num_vars(), 1.0);
    let q = localizer.unwrap_or(&one);
    let dq = q.degree();
    if dq > mu.degree {
        return Err(Error::DegreeExceeded { needed: dq, available: mu.degree });
    }
    let h = (mu.degree - dq) / 2;
    let idx = &mu.index;
    let n = idx.count_upto(h);
    let terms: Vec<(usize, f64)> = q.terms().collect();
    let mut out = Matrix::zeros(n, n);
    for a in 0..n {
        let ea = idx.exponents(a);
        for b in a..n {
            let eb = idx.exponents(b);
            let v: f64 = terms
                .iter()
                .map(|&(g, c)| c * mu.moments[idx.rank_sum3(ea, eb, idx.exponents(g))])
                .sum();
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// A sum-of-squares weight p, optionally with square roots g_i, p = Σ g_i².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReweightPolynomial {
    pub poly: Polynomial,
    pub degree: usize,
    pub certificate: Option<Vec<Polynomial>>,
}

/// certificates with more squares than this are dropped on multiplication
const MAX_CERTIFICATE_TERMS: usize = 4096;

impl ReweightPolynomial {
    pub fn one(num_vars: usize) -> Self {
        let g = Polynomial::constant(num_vars, 1.0);
        ReweightPolynomial { poly: g.clone(), degree: 0, certificate: Some(vec![g]) }
    }

    pub fn square(g: Polynomial) -> Self {
        ReweightPolynomial::from_squares(vec![g])
    }

    pub fn from_squares(gs: Vec<Polynomial>) -> Self {
        let num_vars = gs[0].num_vars;
        let mut poly = Polynomial::zero(num_vars);
        for g in &gs {
            poly = poly.add(&g.mul(g));
        }
        let degree = poly.degree();
        ReweightPolynomial { poly, degree, certificate: Some(gs) }
    }

    /// A polynomial whose SOS-ness is checked by a Gram-matrix feasibility
    /// problem when used.
    pub fn uncertified(poly: Polynomial) -> Self {
        let degree = poly.degree();
        ReweightPolynomial { poly, degree, certificate: None }
    }

    pub fn num_vars(&self) -> usize {
        self.poly.num_vars
    }

    pub fn scale(&self, s: f64) -> Self {
        assert!(s > 0.0);
        ReweightPolynomial {
            poly: self.poly.scale(s),
            degree: self.degree,
            certificate: self.certificate.as_ref().map(|gs| gs.iter().map(|g| g.scale(s.sqrt())).collect()),
        }
    }

    /// p·q with the certificate {g_i h_j}
    pub fn product(&self, other: &ReweightPolynomial) -> Self {
        let poly = self.poly.mul(&other.poly);
        let certificate = match (&self.certificate, &other.certificate) {
            (Some(a), Some(b)) if a.len() * b.len() <= MAX_CERTIFICATE_TERMS => {
                Some(a.iter().flat_map(|g| b.iter().map(move |h| g.mul(h))).collect())
            }
            _ => None,
        };
        ReweightPolynomial { degree: self.degree + other.degree, poly, certificate }
    }

    /// relative reconstruction error of the certificate, if present
    pub fn certificate_error(&self) -> Option<f64> {
        let gs = self.certificate.as_ref()?;
        let mut sum = Polynomial::zero(self.poly.num_vars);
        for g in gs {
            sum = sum.add(&g.mul(g));
        }
        let diff = sum.sub(&self.poly).coeff_norm();
        Some(diff / self.poly.coeff_norm().max(f64::MIN_POSITIVE))
    }
}

/// μ′ = p·μ / Ẽ_μ p with default tolerances.
pub fn reweight(mu: &PseudoDistribution, p: &ReweightPolynomial) -> Result<PseudoDistribution> {
    reweight_with(mu, p, &Tolerances::default(), Exec::default())
}

pub fn reweight_with(
    mu: &PseudoDistribution,
    p: &ReweightPolynomial,
    tol: &Tolerances,
    exec: Exec,
) -> Result<PseudoDistribution> {
    if p.num_vars() != mu.num_vars() {
        return Err(Error::DimensionMismatch { expected: mu.num_vars(), got: p.num_vars() });
    }
    let dp = p.poly.degree();
    if dp > p.degree {
        return Err(Error::IllFormed(format!("weight has degree {dp} above its bound {}", p.degree)));
    }
    if dp > 0 && dp + 2 > mu.degree {
        return Err(Error::DegreeExhausted { needed: dp + 2, available: mu.degree });
    }
    match p.certificate_error() {
        Some(err) if err <= 1e-8 => {}
        Some(_) => return Err(Error::NotSos),
        None => {
            if !sdp::is_sos(&p.poly, tol.eps_psd)? {
                return Err(Error::NotSos);
            }
        }
    }
    let z = pseudo_expect(mu, &p.poly)?;
    if !(z > tol.eps_norm) {
        return Err(Error::DegenerateWeight { weight: z });
    }
    let degree = mu.degree - dp;
    let idx = &mu.index;
    let n = idx.count_upto(degree);
    let terms: Vec<(usize, f64)> = p.poly.terms().collect();
    let mut moments = vec![0.0; n];
    exec.fill_chunks(&mut moments, 256, |start, out| {
        for (k, slot) in out.iter_mut().enumerate() {
            let ea = idx.exponents(start + k);
            let s: f64 = terms
                .iter()
                .map(|&(b, c)| c * mu.moments[idx.rank_sum(ea, idx.exponents(b))])
                .sum();
            *slot = s / z;
        }
    });
    moments[0] = 1.0;
    let constraints = mu.constraints.iter().filter(|c| c.polynomial.degree() <= degree).cloned().collect();
    Ok(PseudoDistribution { index: mu.index.clone(), degree, moments, constraints })
}

/// Exact moments of a finitely supported distribution.
pub fn embed_actual_distribution(support: &[(Vec<f64>, f64)], degree: usize) -> Result<PseudoDistribution> {
    let Some(first) = support.first() else {
        return Err(Error::BadWeights("empty support".into()));
    };
    let m = first.0.len();
    if let Some((_, w)) = support.iter().find(|(_, w)| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::BadWeights(format!("negative or non-finite weight {w}")));
    }
    let total: f64 = support.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::BadWeights(format!("weights sum to {total}")));
    }
    let index = MonomialIndex::shared(m, degree);
    let n = index.count_upto(degree);
    let mut moments = vec![0.0; n];
    for (x, w) in support {
        if x.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: x.len() });
        }
        for (slot, v) in moments.iter_mut().zip(index.evaluate_all(x, degree)) {
            *slot += w * v;
        }
    }
    moments[0] = 1.0;
    Ok(PseudoDistribution { index, degree, moments, constraints: Vec::new() })
}

/// Summary of the pseudo-distribution invariants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvariantReport {
    pub normalization_error: f64,
    pub min_moment_eigenvalue: f64,
    pub max_equality_residual: f64,
    pub min_localizer_eigenvalue: f64,
    pub ok: bool,
}

/// Checks Ẽ1 = 1, PSD moment matrix, equality residuals and localizing
/// matrices of inequality constraints (where the degree allows one).
pub fn check_invariants(mu: &PseudoDistribution, tol: &Tolerances) -> Result<InvariantReport> {
    let normalization_error = (mu.moments[0] - 1.0).abs();
    let mm = mu.moment_matrix(None)?;
    let min_moment_eigenvalue = linalg::sym_eig(&mm, 1e-12)?.min_value();
    let mut max_equality_residual: f64 = 0.0;
    let mut min_localizer_eigenvalue = f64::INFINITY;
    for c in &mu.constraints {
        let dq = c.polynomial.degree();
        if dq > mu.degree {
            continue;
        }
        match c.kind {
            ConstraintKind::Equality => {
                max_equality_residual = max_equality_residual.max(equality_residual(mu, &c.polynomial)?);
            }
            ConstraintKind::Inequality => {
                let lm = mu.moment_matrix(Some(&c.polynomial))?;
                let e = linalg::sym_eig(&lm, 1e-12)?.min_value();
                min_localizer_eigenvalue = min_localizer_eigenvalue.min(e);
            }
        }
    }
    let ok = normalization_error == 0.0
        && min_moment_eigenvalue >= -tol.eps_psd
        && max_equality_residual <= tol.eps_con
        && (min_localizer_eigenvalue.is_infinite() || min_localizer_eigenvalue >= -tol.eps_psd);
    Ok(InvariantReport {
        normalization_error,
        min_moment_eigenvalue,
        max_equality_residual,
        min_localizer_eigenvalue,
        ok,
    })
}

/// max over monomials m with deg(q·m) ≤ d of |Ẽ[q·m]|
pub fn equality_residual(mu: &PseudoDistribution, q: &Polynomial) -> Result<f64> {
    let dq = q.degree();
    if dq > mu.degree {
        return Err(Error::DegreeExceeded { needed: dq, available: mu.degree });
    }
    let idx = &mu.index;
    let terms: Vec<(usize, f64)> = q.terms().collect();
    let mut worst: f64 = 0.0;
    for a in 0..idx.count_upto(mu.degree - dq) {
        let ea = idx.exponents(a);
        let v: f64 = terms.iter().map(|&(g, c)| c * mu.moments[idx.rank_sum(ea, idx.exponents(g))]).sum();
        worst = worst.max(v.abs());
    }
    Ok(worst)
}

/// Outcome of random quadratic-form probes.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probes: usize,
    pub square_violations: usize,
    pub cauchy_schwarz_violations: usize,
    pub worst_square: f64,
}

/// Ẽ f² ≥ −εpsd‖f‖² and (Ẽ fg)² ≤ Ẽf²·Ẽg² + tol for random f, g of degree ≤ ⌊d/2⌋.
pub fn probe_squares<R: Rng + ?Sized>(
    mu: &PseudoDistribution,
    probes: usize,
    tol: &Tolerances,
    rng: &mut R,
) -> Result<ProbeReport> {
    let mm = mu.moment_matrix(None)?;
    let n = mm.rows;
    let mut rep = ProbeReport { probes, ..Default::default() };
    let quad = |f: &[f64], g: &[f64]| -> f64 {
        let mf = mm.matvec(f).unwrap();
        linalg::dot(&mf, g)
    };
    let mut worst = f64::INFINITY;
    for _ in 0..probes {
        let f: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (ff, gg, fg) = (quad(&f, &f), quad(&g, &g), quad(&f, &g));
        let nf = linalg::dot(&f, &f);
        let ng = linalg::dot(&g, &g);
        worst = worst.min(ff / nf);
        if ff < -tol.eps_psd * nf {
            rep.square_violations += 1;
        }
        // slack scaled like the product it guards
        let slack = tol.eps_psd * (nf * gg.abs() + ng * ff.abs() + nf * ng) + 1e-12 * ff.abs() * gg.abs();
        if fg * fg > ff.max(0.0) * gg.max(0.0) + slack {
            rep.cauchy_schwarz_violations += 1;
        }
    }
    rep.worst_square = worst;
    Ok(rep)
}

/// Smallest eigenvalue of the Hankel matrix (Ẽx^{i+j}) of a univariate μ over
/// i, j ≤ ⌊(d−1)/2⌋.
pub fn hankel_min_eigenvalue(mu: &PseudoDistribution) -> Result<f64> {
    if mu.num_vars() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: mu.num_vars() });
    }
    let h = mu.degree.saturating_sub(1) / 2;
    let mut m = Matrix::zeros(h + 1, h + 1);
    for i in 0..=h {
        for j in 0..=h {
            m[(i, j)] = mu.moments[i + j];
        }
    }
    Ok(linalg::sym_eig(&m, 1e-12)?.min_value())
}

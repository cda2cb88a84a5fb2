//! Monomial indexing and dense polynomials.
//!
//! Monomials of total degree ≤ D in `m` variables are laid out in graded
//! lexicographic order: first by degree, then lexicographically descending in
//! the exponent vector (x₁² before x₁x₂ before x₂²). The position of a
//! monomial does not depend on D, so a table for degree D is a prefix of the
//! table for any larger degree.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Graded-lex table of all monomials of degree ≤ `max_degree`.
#[derive(Debug)]
pub struct MonomialIndex {
    num_vars: usize,
    max_degree: usize,
    exps: Vec<u16>,
    // for index i > 0: (index of x^α / x_v, v) with v the first variable present
    parent: Vec<(u32, u16)>,
    binom: Vec<Vec<usize>>,
}

/// C(a, b) with a small table, exact in usize for desk sizes
fn binomial_table(amax: usize, bmax: usize) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; bmax + 1]; amax + 1];
    for a in 0..=amax {
        t[a][0] = 1;
        for b in 1..=bmax.min(a) {
            t[a][b] = t[a - 1][b - 1].saturating_add(if b <= a - 1 { t[a - 1][b] } else { 0 });
        }
    }
    t
}

impl MonomialIndex {
    pub fn new(num_vars: usize, max_degree: usize) -> Self {
        assert!(num_vars >= 1, "at least one variable");
        let binom = binomial_table(num_vars + max_degree + 1, num_vars.max(1));
        let mut idx = MonomialIndex { num_vars, max_degree, exps: Vec::new(), parent: Vec::new(), binom };
        let total = idx.count_upto(max_degree);
        idx.exps.reserve(total * num_vars);
        let mut cur = vec![0u16; num_vars];
        for d in 0..=max_degree {
            gen_degree(num_vars, 0, d, &mut cur, &mut idx.exps);
        }
        let len = idx.exps.len() / num_vars;
        idx.parent = vec![(0, 0); len];
        for i in 1..len {
            let e = idx.exponents(i).to_vec();
            let v = e.iter().position(|&x| x > 0).unwrap();
            let mut p = e.clone();
            p[v] -= 1;
            idx.parent[i] = (idx.rank(&p) as u32, v as u16);
        }
        idx
    }

    /// Cached table shared across the process.
    pub fn shared(num_vars: usize, max_degree: usize) -> Arc<MonomialIndex> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<MonomialIndex>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(found) = cache.lock().unwrap().get(&(num_vars, max_degree)) {
            return found.clone();
        }
        let built = Arc::new(MonomialIndex::new(num_vars, max_degree));
        cache.lock().unwrap().entry((num_vars, max_degree)).or_insert(built).clone()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// number of monomials of degree ≤ d, i.e. C(m + d, m)
    pub fn count_upto(&self, d: usize) -> usize {
        self.binom[self.num_vars + d][self.num_vars]
    }

    pub fn exponents(&self, i: usize) -> &[u16] {
        &self.exps[i * self.num_vars..(i + 1) * self.num_vars]
    }

    pub fn degree_of(&self, i: usize) -> usize {
        self.exponents(i).iter().map(|&e| e as usize).sum()
    }

    pub fn parent(&self, i: usize) -> (usize, usize) {
        let (p, v) = self.parent[i];
        (p as usize, v as usize)
    }

    /// Position of a monomial; its degree must not exceed `max_degree`.
    pub fn rank(&self, e: &[u16]) -> usize {
        let d: usize = e.iter().map(|&x| x as usize).sum();
        self.rank_with_degree(e.iter().map(|&x| x as usize), d)
    }

    /// Position of the product x^a · x^b.
    pub fn rank_sum(&self, a: &[u16], b: &[u16]) -> usize {
        let d: usize = a.iter().zip(b).map(|(&x, &y)| x as usize + y as usize).sum();
        self.rank_with_degree(a.iter().zip(b).map(|(&x, &y)| x as usize + y as usize), d)
    }

    /// Position of x^a · x^b · x^c.
    pub fn rank_sum3(&self, a: &[u16], b: &[u16], c: &[u16]) -> usize {
        let it = || a.iter().zip(b).zip(c).map(|((&x, &y), &z)| x as usize + y as usize + z as usize);
        self.rank_with_degree(it(), it().sum())
    }

    fn rank_with_degree(&self, e: impl Iterator<Item = usize>, d: usize) -> usize {
        debug_assert!(d <= self.max_degree, "monomial degree {d} above table degree {}", self.max_degree);
        let m = self.num_vars;
        let mut r = if d == 0 { 0 } else { self.count_upto(d - 1) };
        let mut rem = d;
        for (i, ei) in e.enumerate() {
            let rest = m - i - 1;
            if rest > 0 && rem > ei {
                r += self.binom[rem - ei - 1 + rest][rest];
            }
            rem -= ei;
        }
        r
    }

    /// Values of every monomial of degree ≤ d at the point x.
    pub fn evaluate_all(&self, x: &[f64], d: usize) -> Vec<f64> {
        let n = self.count_upto(d);
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        for i in 1..n {
            let (p, var) = self.parent(i);
            v[i] = v[p] * x[var];
        }
        v
    }
}

fn gen_degree(m: usize, var: usize, rem: usize, cur: &mut Vec<u16>, out: &mut Vec<u16>) {
    if var == m - 1 {
        cur[var] = rem as u16;
        out.extend_from_slice(cur);
        cur[var] = 0;
        return;
    }
    for e in (0..=rem).rev() {
        cur[var] = e as u16;
        gen_degree(m, var + 1, rem - e, cur, out);
    }
    cur[var] = 0;
}

/// Dense polynomial in graded-lex coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub num_vars: usize,
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn zero(num_vars: usize) -> Self {
        Polynomial { num_vars, coeffs: vec![0.0] }
    }

    pub fn constant(num_vars: usize, c: f64) -> Self {
        Polynomial { num_vars, coeffs: vec![c] }
    }

    pub fn var(num_vars: usize, i: usize) -> Self {
        let mut p = Polynomial { num_vars, coeffs: vec![0.0; num_vars + 1] };
        p.coeffs[1 + i] = 1.0;
        p
    }

    /// c + Σ a_i x_i
    pub fn linear(a: &[f64], c: f64) -> Self {
        let mut coeffs = Vec::with_capacity(a.len() + 1);
        coeffs.push(c);
        coeffs.extend_from_slice(a);
        Polynomial { num_vars: a.len(), coeffs }
    }

    pub fn from_terms(num_vars: usize, terms: &[(Vec<u16>, f64)]) -> Self {
        let d = terms.iter().map(|(e, _)| e.iter().map(|&x| x as usize).sum::<usize>()).max().unwrap_or(0);
        let idx = MonomialIndex::shared(num_vars, d);
        let mut coeffs = vec![0.0; idx.count_upto(d)];
        for (e, c) in terms {
            coeffs[idx.rank(e)] += c;
        }
        Polynomial { num_vars, coeffs }
    }

    /// Σ_i (x_i)² over the listed variables, minus `c`
    pub fn sum_of_squares_minus(num_vars: usize, vars: &[usize], c: f64) -> Self {
        let mut terms: Vec<(Vec<u16>, f64)> = vars
            .iter()
            .map(|&v| {
                let mut e = vec![0u16; num_vars];
                e[v] = 2;
                (e, 1.0)
            })
            .collect();
        terms.push((vec![0; num_vars], -c));
        Polynomial::from_terms(num_vars, &terms)
    }

    /// storage degree (the coefficient vector covers all monomials up to it)
    pub fn storage_degree(&self) -> usize {
        let mut d = 0;
        while count_monomials(self.num_vars, d) < self.coeffs.len() {
            d += 1;
        }
        d
    }

    /// highest degree carrying a nonzero coefficient
    pub fn degree(&self) -> usize {
        let Some(last) = self.coeffs.iter().rposition(|&c| c != 0.0) else {
            return 0;
        };
        let idx = MonomialIndex::shared(self.num_vars, self.storage_degree());
        idx.degree_of(last)
    }

    pub fn index(&self) -> Arc<MonomialIndex> {
        MonomialIndex::shared(self.num_vars, self.storage_degree())
    }

    /// drops trailing storage beyond the true degree
    pub fn trimmed(mut self) -> Self {
        let d = self.degree();
        let idx = MonomialIndex::shared(self.num_vars, d);
        self.coeffs.truncate(idx.count_upto(d));
        self
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coeffs.iter().copied().enumerate().filter(|(_, c)| *c != 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Polynomial { num_vars: self.num_vars, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &Polynomial) -> Self {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Polynomial) -> Self {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &Polynomial, s: f64) -> Self {
        assert_eq!(self.num_vars, other.num_vars);
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = vec![0.0; n];
        for (i, c) in self.coeffs.iter().enumerate() {
            coeffs[i] += c;
        }
        for (i, c) in other.coeffs.iter().enumerate() {
            coeffs[i] += s * c;
        }
        Polynomial { num_vars: self.num_vars, coeffs }
    }

    pub fn mul(&self, other: &Polynomial) -> Self {
        assert_eq!(self.num_vars, other.num_vars);
        let (da, db) = (self.degree(), other.degree());
        let idx = MonomialIndex::shared(self.num_vars, da + db);
        let mut coeffs = vec![0.0; idx.count_upto(da + db)];
        let b: Vec<(usize, f64)> = other.terms().collect();
        for (i, a) in self.terms() {
            let ea = idx.exponents(i);
            for &(j, bc) in &b {
                coeffs[idx.rank_sum(ea, idx.exponents(j))] += a * bc;
            }
        }
        Polynomial { num_vars: self.num_vars, coeffs }
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut result = Polynomial::constant(self.num_vars, 1.0);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.degree();
        let idx = MonomialIndex::shared(self.num_vars, d);
        let vals = idx.evaluate_all(x, d);
        self.coeffs.iter().zip(&vals).map(|(c, v)| c * v).sum()
    }

    /// Re-expresses the polynomial in a larger variable set, mapping variable
    /// i to `target[i]`.
    pub fn embed(&self, num_vars: usize, target: &[usize]) -> Result<Self> {
        if target.len() != self.num_vars || target.iter().any(|&t| t >= num_vars) {
            return Err(Error::DimensionMismatch { expected: self.num_vars, got: target.len() });
        }
        let src = self.index();
        let terms: Vec<(Vec<u16>, f64)> = self
            .terms()
            .map(|(i, c)| {
                let mut e = vec![0u16; num_vars];
                for (k, &x) in src.exponents(i).iter().enumerate() {
                    e[target[k]] += x;
                }
                (e, c)
            })
            .collect();
        Ok(Polynomial::from_terms(num_vars, &terms))
    }
}

/// C(m + d, m), the number of monomials of degree ≤ d in m variables
pub fn count_monomials(num_vars: usize, d: usize) -> usize {
    let mut c: usize = 1;
    for i in 1..=num_vars {
        c = c * (d + i) / i;
    }
    c
}

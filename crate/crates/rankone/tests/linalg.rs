use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rankone::linalg::*;
use rankone::poly::{count_monomials, Polynomial};
use rankone::Error;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(&mut r)).collect()).unwrap()
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn two_by_two_eigenvalues() {
    let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
    let e = sym_eig(&a, 1e-14).unwrap();
    assert!((e.values[0] - 3.0).abs() < 1e-12 && (e.values[1] - 1.0).abs() < 1e-12);
    let v = e.vector(0);
    assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-12 && (v[0] - v[1]).abs() < 1e-12);
}

#[test]
fn diagonal_eigenvalues_are_sorted() {
    let e = sym_eig(&Matrix::diag(&[0.5, -2.0, 3.0]), 1e-14).unwrap();
    assert_eq!(e.values, vec![3.0, 0.5, -2.0]);
    assert_eq!(e.min_value(), -2.0);
}

#[test]
fn asymmetric_input_is_rejected() {
    let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
    assert!(matches!(sym_eig(&a, 1e-12), Err(Error::NotSymmetric { .. })));
}

#[test]
fn svd_of_rank_one_square() {
    let u = [1.0, 2.0, -1.0, 0.5, 0.0, 3.0, 1.0];
    let v = [0.3, -0.1, 2.0, 1.0, 1.0, 0.0, -0.7];
    let a = Matrix::outer(&u, &v);
    let s = singular_values(&a).unwrap();
    assert!((s[0] - norm(&u) * norm(&v)).abs() < 1e-10);
    assert!(s[1..].iter().all(|x| x.abs() < 1e-10));
}

#[test]
fn psd_clip_behaviour() {
    let a = Matrix::diag(&[1.0, -1e-9]);
    let c = psd_clip(&a, 1e-7).unwrap();
    assert_eq!(c[(1, 1)], 0.0);
    assert!(matches!(psd_clip(&Matrix::diag(&[1.0, -0.5]), 1e-7), Err(Error::NotPsd { .. })));
}

#[test]
fn gaussian_sampler_matches_covariance() {
    let g = random_matrix(3, 3, 1);
    let cov = g.matmul(&g.transpose()).unwrap().symmetrize();
    let s = GaussianSampler::new(&cov).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let m = 40_000;
    let mut emp = Matrix::zeros(3, 3);
    for _ in 0..m {
        let x = s.sample(&mut r);
        for i in 0..3 {
            for j in 0..3 {
                emp[(i, j)] += x[i] * x[j] / m as f64;
            }
        }
    }
    assert!(max_abs_diff(&emp, &cov) < 0.05 * cov.frobenius_norm(), "{emp:?} vs {cov:?}");
}

#[test]
fn ortho_basis_projection_and_complement() {
    let b = OrthoBasis::from_spanning(4, &[vec![1.0, 1.0, 0.0, 0.0], vec![2.0, 2.0, 0.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]], 1e-10).unwrap();
    assert_eq!(b.len(), 2);
    assert!(b.orthonormality_error() < 1e-14);
    let c = b.complement();
    assert_eq!(c.len(), 2);
    let x = [0.3, -1.0, 2.0, 5.0];
    let p = b.project(&x).unwrap();
    let q = c.project(&x).unwrap();
    for i in 0..4 {
        assert!((p[i] + q[i] - x[i]).abs() < 1e-12);
    }
    assert!(dot(&p, &q).abs() < 1e-12);
    let pp = b.project(&p).unwrap();
    assert!(pp.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn monomial_counts() {
    assert_eq!(count_monomials(2, 4), 15);
    assert_eq!(count_monomials(6, 6), 924);
    assert_eq!(count_monomials(1, 10), 11);
}

#[test]
fn top_count_values() {
    assert_eq!(top_count_symmetric(1), 1);
    assert_eq!(top_count_symmetric(9), 4);
    assert_eq!(top_count_symmetric(10), 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eig_reconstructs(seed in 0u64..10_000, n in 1usize..9) {
        let g = random_matrix(n, n, seed);
        let a = g.add(&g.transpose()).unwrap();
        let e = sym_eig(&a, 1e-13).unwrap();
        prop_assert!(max_abs_diff(&e.reconstruct(), &a) < 1e-10 * (1.0 + a.frobenius_norm()));
        let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
        prop_assert!(max_abs_diff(&vtv, &Matrix::identity(n)) < 1e-12);
        for w in e.values.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn svd_matches_gram_eigenvalues(seed in 0u64..10_000, rows in 1usize..8, cols in 1usize..8) {
        let a = random_matrix(rows, cols, seed);
        let s = svd(&a).unwrap();
        prop_assert!(max_abs_diff(&s.reconstruct(), &a) < 1e-10 * (1.0 + a.frobenius_norm()));
        let sv = singular_values(&a).unwrap();
        let gram = a.transpose().matmul(&a).unwrap().symmetrize();
        let ev = sym_eig(&gram, 1e-14).unwrap().values;
        for (k, x) in sv.iter().enumerate() {
            prop_assert!((x * x - ev[k]).abs() < 1e-9 * (1.0 + ev[0]));
        }
    }

    #[test]
    fn top_mass_dominates_frobenius(seed in 0u64..10_000, n in 1usize..30, rank in 1usize..30) {
        let g = random_matrix(n, rank.min(n), seed);
        let a = g.matmul(&g.transpose()).unwrap().symmetrize();
        let (lhs, rhs) = top_mass_vs_frobenius(&a).unwrap();
        prop_assert!(lhs >= rhs * (1.0 - 1e-9));
    }

    #[test]
    fn polynomial_arithmetic_matches_evaluation(
        c in proptest::collection::vec(-2.0f64..2.0, 3),
        d in proptest::collection::vec(-2.0f64..2.0, 3),
        x in proptest::collection::vec(-1.5f64..1.5, 2),
        k in 0usize..4,
    ) {
        let p = Polynomial::linear(&c[..2], c[2]);
        let q = Polynomial::linear(&d[..2], d[2]).mul(&Polynomial::var(2, 0));
        let (pv, qv) = (p.eval(&x), q.eval(&x));
        prop_assert!((p.mul(&q).eval(&x) - pv * qv).abs() < 1e-10);
        prop_assert!((p.add(&q).eval(&x) - (pv + qv)).abs() < 1e-12);
        prop_assert!((p.sub(&q).eval(&x) - (pv - qv)).abs() < 1e-12);
        prop_assert!((p.pow(k).eval(&x) - pv.powi(k as i32)).abs() < 1e-9 * (1.0 + pv.abs().powi(k as i32)));
        let e = p.embed(3, &[2, 0]).unwrap();
        prop_assert!((e.eval(&[x[1], 7.0, x[0]]) - pv).abs() < 1e-12);
    }
}

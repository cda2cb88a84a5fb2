use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankone::linalg::OrthoBasis;
use rankone::measure::{ActualDistribution, Measure};
use rankone::poly::Polynomial;
use rankone::pseudodist::{embed_actual_distribution, PseudoDistribution};
use rankone::reweighting::*;
use rankone::Error;

fn x1() -> Polynomial {
    Polynomial::var(1, 0)
}

fn two_point(a: f64, b: f64) -> ActualDistribution {
    ActualDistribution::uniform(vec![vec![a], vec![b]]).unwrap()
}

fn bound_holds(mu: &impl Measure, ell: &Polynomial, m: f64, d: usize, eps: f64) -> bool {
    let dev = ell.sub(&Polynomial::constant(ell.num_vars, m)).pow(2 * d);
    mu.expect(&dev).unwrap() <= 3.0 * eps.powi(2 * d as i32) * m.powi(2 * d as i32) * (1.0 + 1e-9)
}

#[test]
fn point_mass_is_already_fixed() {
    let mu = ActualDistribution::point_mass(vec![2.0]);
    let (out, _, rep) = fix_scalar(&mu, &x1(), 2, 0.2, 100).unwrap();
    assert!((rep.m - 2.0).abs() < 1e-12);
    assert!(rep.achieved_ratio.abs() < 1e-20);
    assert!(rep.stage_powers.is_empty());
    assert_eq!(out.points().len(), 1);
}

#[test]
fn two_point_concentrates_on_the_larger_value() {
    let mu = two_point(1.0, 3.0);
    let (out, _, rep) = fix_scalar(&mu, &x1(), 1, 0.1, 10_000).unwrap();
    assert!((rep.m - 3.0).abs() < 1e-6, "m = {}", rep.m);
    assert!(rep.achieved_ratio <= 3.0 * 0.01);
    assert!(bound_holds(&out, &x1(), rep.m, 1, 0.1));
    // exact stage computation: Ẽ_1 x² = (1 + 3^{2k+2})/(1 + 3^{2k})
    let k = rep.stage_powers[0] as i32;
    let want = (1.0 + 3f64.powi(2 * k + 2)) / (1.0 + 3f64.powi(2 * k));
    assert!((rep.stage_trace[1] - want).abs() < 1e-9);
}

#[test]
fn symmetric_two_point_picks_a_sign() {
    let mu = two_point(-2.0, 2.0);
    let (out, _, rep) = fix_scalar(&mu, &x1(), 2, 0.2, 1000).unwrap();
    assert!((rep.m.abs() - 2.0).abs() < 1e-12);
    assert!(rep.stage_powers.is_empty());
    assert!(bound_holds(&out, &x1(), rep.m, 2, 0.2));
    assert!((out.expect(&x1()).unwrap() - rep.m).abs() < 1e-12);
}

#[test]
fn pseudo_and_actual_paths_agree() {
    let support = vec![(vec![0.5], 0.3), (vec![1.5], 0.5), (vec![-2.0], 0.2)];
    let act = ActualDistribution::new(support.clone()).unwrap();
    let pd = embed_actual_distribution(&support, 200).unwrap();
    let (a, _, ra) = fix_scalar(&act, &x1(), 1, 0.3, 200).unwrap();
    let (p, _, rp) = fix_scalar(&pd, &x1(), 1, 0.3, 196).unwrap();
    assert_eq!(ra.stage_powers, rp.stage_powers);
    assert!((ra.m - rp.m).abs() < 1e-8 * ra.m.abs());
    let ea = a.expect(&x1()).unwrap();
    let ep = Measure::expect(&p, &x1()).unwrap();
    assert!((ea - ep).abs() < 1e-8);
}

#[test]
fn below_unit_second_moment_is_rejected() {
    let mu = two_point(0.1, 0.2);
    assert!(matches!(fix_scalar(&mu, &x1(), 1, 0.1, 100), Err(Error::PreconditionViolated(_))));
}

#[test]
fn tight_budget_is_exhausted() {
    let mu = two_point(1.0, 1.6);
    assert!(matches!(fix_scalar(&mu, &x1(), 2, 0.2, 4), Err(Error::DegreeExhausted { .. })));
}

#[test]
fn low_degree_pseudo_distribution_is_exhausted() {
    let pd = embed_actual_distribution(&[(vec![1.0], 0.5), (vec![2.0], 0.5)], 6).unwrap();
    assert!(matches!(fix_scalar(&pd, &x1(), 2, 0.2, 100), Err(Error::DegreeExhausted { .. })));
}

#[test]
fn monotonicity_examples() {
    let pm = embed_actual_distribution(&[(vec![1.7], 1.0)], 5).unwrap();
    assert!(monotonicity_check(&pm, 1).unwrap());
    let m = pm.moments();
    assert!((m[4] / m[2] - m[2]).abs() < 1e-12);
    let two = embed_actual_distribution(&[(vec![1.0], 0.5), (vec![2.0], 0.5)], 5).unwrap();
    let m = two.moments();
    assert!((m[4] / m[2] - 3.4).abs() < 1e-12 && (m[2] - 2.5).abs() < 1e-12);
    assert!(monotonicity_check(&two, 1).unwrap());
    assert!(matches!(monotonicity_check(&two, 2), Err(Error::DegreeExceeded { .. })));
}

#[test]
fn beta_moments_match_closed_form() {
    // Beta(1, b): E X^k = k! Γ(1+b) / Γ(1+b+k)
    for b in [1.0f64, 2.0, 5.0] {
        for k in 0..8usize {
            let mut want = 1.0;
            for r in 0..k {
                want *= (1.0 + r as f64) / (1.0 + b + r as f64);
            }
            assert!((beta_raw_moment(1.0, b, k) - want).abs() < 1e-14);
        }
    }
    assert!((c_k(1, 4) - 1.0 / 3.0).abs() < 1e-15);
    // mean of Beta(1, 1) is 1/2, second moment 1/3
    assert!((beta_raw_moment(1.0, 1.0, 2) - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn beta_ratio_holds_exactly_above_threshold() {
    for d in 3..=64usize {
        for eps in [0.03, 0.1, 0.3] {
            let t = beta_ratio_threshold(d, eps);
            for k in 0..(t + 50) {
                let holds = c_k(k + 1, d) >= (1.0 - eps) * c_k(k, d) * (1.0 - 1e-12);
                if k >= t {
                    assert!(holds);
                }
                if k + 1 < t {
                    assert!(!holds);
                }
            }
        }
    }
}

fn unit_basis(d: usize) -> OrthoBasis {
    OrthoBasis::full(d)
}

#[test]
fn subspace_point_mass() {
    let mu = ActualDistribution::point_mass(vec![0.6, 0.8]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = SubspaceFixConfig { delta: 0.3, ..Default::default() };
    let (_, _, rep) = fix_subspace(&mu, &[0, 1], &unit_basis(2), &cfg, &mut rng).unwrap();
    assert!((rep.achieved - 1.0).abs() < 1e-9);
    assert!((rankone::linalg::norm(&rep.chosen_direction) - 1.0).abs() < 1e-12);
}

#[test]
fn subspace_antipodal_pair_is_broken_by_the_sign_split() {
    let mu = ActualDistribution::uniform(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = SubspaceFixConfig { delta: 0.1, ..Default::default() };
    let (out, _, rep) = fix_subspace(&mu, &[0, 1], &unit_basis(2), &cfg, &mut rng).unwrap();
    assert!(rep.achieved >= 0.9, "{rep:?}");
    assert!(out.mean(&[0, 1])[0].abs() > 0.94);
}

#[test]
fn subspace_orthonormal_pair_concentrates() {
    let mu = ActualDistribution::uniform(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SubspaceFixConfig { delta: 0.3, ..Default::default() };
        let (_, _, rep) = fix_subspace(&mu, &[0, 1], &unit_basis(2), &cfg, &mut rng).unwrap();
        assert!(rep.achieved >= 0.7, "seed {seed}: {rep:?}");
    }
}

#[test]
fn subspace_on_pseudo_distribution_with_small_budget() {
    // concentrated second moment, k forced to 0 by the budget
    let support = vec![(vec![0.8, 0.6, 0.0], 0.5), (vec![-0.8, -0.6, 0.0], 0.5)];
    let pd: PseudoDistribution = embed_actual_distribution(&support, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = SubspaceFixConfig { delta: 0.3, degree_budget: Some(2), ..Default::default() };
    let (out, _, rep) = fix_subspace(&pd, &[0, 1, 2], &unit_basis(3), &cfg, &mut rng).unwrap();
    assert_eq!(rep.k, 0);
    assert_eq!(rep.degree_spent, 2);
    assert_eq!(Measure::degree(&out), Some(4));
    assert!(rep.achieved >= 0.7);
}

#[test]
fn subspace_restricted_to_a_coordinate_block() {
    let support: Vec<(Vec<f64>, f64)> = vec![(vec![1.0, 0.0, 0.3], 0.5), (vec![0.0, 1.0, -0.3], 0.5)];
    let mu = ActualDistribution::new(support).unwrap();
    let s = OrthoBasis::from_spanning(2, &[vec![1.0, 0.0], vec![0.0, 1.0]], 1e-10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (out, w, rep) = fix_subspace(&mu, &[0, 1], &s, &SubspaceFixConfig::default(), &mut rng).unwrap();
    assert!(rep.achieved >= 0.7);
    // the returned weight reproduces the output in one step
    let again = mu.reweight_square(&w).unwrap();
    assert!((again.mean(&[0, 1, 2])[2] - out.mean(&[0, 1, 2])[2]).abs() < 1e-9);
}

#[test]
fn uniform_sampler_also_succeeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = rankone::linalg::norm(&v).max(1.0);
            v.iter().map(|x| x / n).collect()
        })
        .collect();
    let mu = ActualDistribution::uniform(pts).unwrap();
    let cfg = SubspaceFixConfig { sampler: DirectionSampler::Uniform, ..Default::default() };
    let (_, _, rep) = fix_subspace(&mu, &[0, 1, 2, 3], &unit_basis(4), &cfg, &mut rng).unwrap();
    assert!(rep.achieved >= 0.7);
}

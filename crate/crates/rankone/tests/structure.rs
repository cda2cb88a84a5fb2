use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rankone::linalg::{dot, normalize};
use rankone::measure::{ActualDistribution, Measure};
use rankone::pseudodist::embed_actual_distribution;
use rankone::structure::*;
use rankone::Error;

fn e(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn unit<R: rand::Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    normalize(&mut v);
    v
}

fn vars(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn mean_sq<M: Measure>(mu: &M, vars: &[usize]) -> f64 {
    let m = mu.mean(vars);
    dot(&m, &m)
}

fn check_growth(trace: &StructureTrace, eps: f64) {
    for pair in trace.records.windows(2).skip(1) {
        let (a, b) = (pair[0].mean_norm_sq[0], pair[1].mean_norm_sq[0]);
        assert!(b >= (1.0 + eps / 4.0) * a * (1.0 - 1e-9), "{a} -> {b}");
    }
}

#[test]
fn basis_vectors_first_step_clears_floor() {
    for n in 2..=6 {
        let mu = ActualDistribution::uniform((0..n).map(|i| e(n, i)).collect()).unwrap();
        let cfg = StructureConfig::new(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let (out, _, rec) = making_progress_step(&mu, &vars(n), &cfg, &mut rng).unwrap();
        let floor = 1.0 / (4.0 * (n as f64).sqrt());
        assert!(mean_sq(&out, &vars(n)) >= floor, "n={n}");
        assert_eq!(rec.kind, StepKind::Progress);
    }
}

#[test]
fn basis_vectors_pseudo_distribution_step() {
    let n = 3;
    let support: Vec<_> = (0..n).map(|i| (e(n, i), 1.0 / n as f64)).collect();
    let pd = embed_actual_distribution(&support, 26).unwrap();
    let cfg = StructureConfig { per_iter_degree: 24, max_iters: 1, ..StructureConfig::new(0.25) };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (out, w, rec) = making_progress_step(&pd, &vars(n), &cfg, &mut rng).unwrap();
    assert!(mean_sq(&out, &vars(n)) >= 1.0 / (4.0 * 3f64.sqrt()));
    assert_eq!(rec.degree_remaining, Some(26 - w.degree()));
}

#[test]
fn point_mass_has_nothing_to_do() {
    let mu = ActualDistribution::point_mass(vec![0.6, 0.8]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = making_progress_step(&mu, &vars(2), &StructureConfig::new(0.25), &mut rng);
    assert!(matches!(r, Err(Error::PreconditionViolated(_))));
    let (out, w, trace) = run_structure(&mu, &vars(2), &StructureConfig::new(0.25)).unwrap();
    assert_eq!(trace.iterations, 0);
    assert!(w.is_one());
    assert_eq!(out, mu);
}

#[test]
fn mixture_step_grows_by_the_contract_factor() {
    // mean 0.9e₁, covariance diag(0.09, 0.1): fails the test at ε = 0.1
    let mu = ActualDistribution::new(vec![(e(2, 0), 0.9), (e(2, 1), 0.05), (vec![0.0, -1.0], 0.05)]).unwrap();
    let eps = 0.1;
    let cfg = StructureConfig::new(eps);
    assert!(!stopping_condition(&mu, &vars(2), eps));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (out, _, _) = making_progress_step(&mu, &vars(2), &cfg, &mut rng).unwrap();
    assert!(mean_sq(&out, &vars(2)) >= (1.0 + eps / 4.0) * 0.81);
}

#[test]
fn antipodal_pair_is_split_once() {
    let mu = ActualDistribution::uniform(vec![e(2, 0), vec![-1.0, 0.0]]).unwrap();
    let (out, _, trace) = run_structure(&mu, &vars(2), &StructureConfig::new(0.25)).unwrap();
    assert_eq!(trace.iterations, 1);
    let m = out.mean(&vars(2));
    assert!(m[0].abs() > 0.9 && m[1].abs() < 1e-12);
    assert!(stopping_condition(&out, &vars(2), 0.25));
}

#[test]
fn planted_two_point_halts_concentrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 4, 9, 16] {
        for seed in 0..5 {
            let (a, b) = (unit(n, &mut rng), unit(n, &mut rng));
            let mu = ActualDistribution::uniform(vec![a, b]).unwrap();
            let eps = 0.25;
            let cfg = StructureConfig { seed, ..StructureConfig::new(eps) };
            let (out, w, trace) = run_structure(&mu, &vars(n), &cfg).unwrap();
            assert!(mean_sq(&out, &vars(n)) >= 1.0 - eps, "n={n} seed={seed}");
            assert!(trace.iterations <= cfg.iteration_bound(n));
            check_growth(&trace, eps);
            let again = mu.reweight_square(&w).unwrap();
            for (x, y) in again.mean(&vars(n)).iter().zip(out.mean(&vars(n))) {
                assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()));
            }
        }
    }
}

#[test]
fn composite_weight_reproduces_pseudo_moments() {
    let support = vec![(e(2, 0), 0.5), (vec![0.0, -1.0], 0.5)];
    let pd = embed_actual_distribution(&support, 40).unwrap();
    let cfg = StructureConfig { per_iter_degree: 36, max_iters: 1, ..StructureConfig::new(0.25) };
    let (out, w, trace) = run_structure(&pd, &vars(2), &cfg).unwrap();
    assert_eq!(trace.iterations, 1);
    let again = pd.reweight_square(&w).unwrap();
    for (x, y) in again.moments().iter().zip(out.moments()) {
        assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()));
    }
    assert!(stopping_condition(&out, &vars(2), 0.25));
}

#[test]
fn iteration_limit_is_reported() {
    // loose subspace accuracy on a tight cluster needs several steps
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 8;
    let pts: Vec<Vec<f64>> = (0..30)
        .map(|_| {
            let mut v: Vec<f64> = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    0.3 * z
                })
                .collect();
            v[0] += 1.0;
            normalize(&mut v);
            v
        })
        .collect();
    let mu = ActualDistribution::uniform(pts).unwrap();
    let cfg = StructureConfig { seed: 2, delta: 0.9, ..StructureConfig::new(0.01) };
    let (_, _, trace) = run_structure(&mu, &vars(n), &cfg).unwrap();
    assert!(trace.iterations >= 2);
    let cfg = StructureConfig { max_iters: 1, ..cfg };
    assert!(matches!(run_structure(&mu, &vars(n), &cfg), Err(Error::IterLimit { limit: 1 })));
}

#[test]
fn pair_product_point_mass_is_unchanged() {
    let mu = ActualDistribution::point_mass(vec![1.0, 0.0, 0.6, 0.8]);
    let (out, w, trace) = run_structure_2d(&mu, &[0, 1], &[2, 3], &StructureConfig::new(0.25)).unwrap();
    assert_eq!(trace.iterations, 0);
    assert!(w.is_one());
    assert_eq!(out, mu);
    assert!(trace.cross_frob.unwrap() < 1e-12);
}

#[test]
fn correlated_pairs_concentrate_on_one() {
    let mu = ActualDistribution::uniform(vec![vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]]).unwrap();
    let eps = 0.25;
    let (out, _, trace) = run_structure_2d(&mu, &[0, 1], &[2, 3], &StructureConfig::new(eps)).unwrap();
    assert!(stopping_condition(&out, &[0, 1], eps));
    assert!(stopping_condition(&out, &[2, 3], eps));
    assert!(trace.iterations >= 1);
    let (c, b) = (trace.cross_frob.unwrap(), trace.cross_bound.unwrap());
    assert!(c <= b + 1e-12);
    let m1 = out.mean(&[0, 1]);
    let m2 = out.mean(&[2, 3]);
    assert!(c <= eps * dot(&m1, &m1).sqrt() * dot(&m2, &m2).sqrt() + 1e-9);
}

#[test]
fn pair_traces_on_random_mixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = 0.25;
    for n in [3, 6] {
        for seed in 0..4 {
            let pts: Vec<Vec<f64>> = (0..4)
                .map(|_| {
                    let mut p = unit(n, &mut rng);
                    p.extend(unit(n, &mut rng));
                    p
                })
                .collect();
            let mu = ActualDistribution::uniform(pts).unwrap();
            let u: Vec<usize> = (0..n).collect();
            let v: Vec<usize> = (n..2 * n).collect();
            let cfg = StructureConfig { seed, ..StructureConfig::new(eps) };
            let (out, w, trace) = run_structure_2d(&mu, &u, &v, &cfg).unwrap();
            assert!(stopping_condition(&out, &u, eps) && stopping_condition(&out, &v, eps));
            assert!(trace.iterations <= cfg.iteration_bound(n));
            assert!(trace.cross_frob.unwrap() <= trace.cross_bound.unwrap() + 1e-12);
            for r in trace.records.iter().filter(|r| r.kind != StepKind::Start && r.kind != StepKind::Initial) {
                assert!(r.achieved >= 1.0 - cfg.delta);
            }
            let again = mu.reweight_square(&w).unwrap();
            assert!((mean_sq(&again, &u) - mean_sq(&out, &u)).abs() < 1e-8);
        }
    }
}

#[test]
fn rank_one_blocks_match_symmetric_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mu = ActualDistribution::uniform(vec![unit(4, &mut rng), unit(4, &mut rng), unit(4, &mut rng)]).unwrap();
    let cfg = StructureConfig::new(0.25);
    let (a, _, _) = run_structure(&mu, &vars(4), &cfg).unwrap();
    let (b, _, _, rep) = run_structure_rank_r(&mu, &[vars(4)], &cfg).unwrap();
    assert_eq!(a, b);
    assert!(rep.per_block_holds() && rep.concatenated_holds());
}

#[test]
fn rank_two_point_mass_is_unchanged() {
    let s = 0.5f64.sqrt();
    let mu = ActualDistribution::point_mass(vec![s, 0.0, 0.0, s]);
    let (out, _, trace, rep) = run_structure_rank_r(&mu, &[vec![0, 1], vec![2, 3]], &StructureConfig::new(0.25)).unwrap();
    assert_eq!(trace.iterations, 0);
    assert_eq!(out, mu);
    assert!(rep.lhs < 1e-24);
    assert!(rep.per_block_holds());
}

#[test]
fn rank_two_split_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = 0.5f64.sqrt();
    let pts: Vec<Vec<f64>> = (0..2)
        .map(|_| {
            let mut p: Vec<f64> = unit(2, &mut rng).iter().map(|x| x * s).collect();
            p.extend(unit(2, &mut rng).iter().map(|x| x * s));
            p
        })
        .collect();
    let mu = ActualDistribution::uniform(pts).unwrap();
    let (_, _, _, rep) = run_structure_rank_r(&mu, &[vec![0, 1], vec![2, 3]], &StructureConfig::new(0.25)).unwrap();
    assert!(rep.concatenated_holds());
    assert!(rep.rhs_per_block <= rep.rhs_concatenated);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symmetric_loop_halts_within_bound(seed in 0u64..10_000, n in 2usize..12, pts in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let support: Vec<Vec<f64>> = (0..pts).map(|_| unit(n, &mut rng)).collect();
        let mu = ActualDistribution::uniform(support).unwrap();
        let eps = 0.25;
        let cfg = StructureConfig { seed, ..StructureConfig::new(eps) };
        let (out, _, trace) = run_structure(&mu, &vars(n), &cfg).unwrap();
        prop_assert!(stopping_condition(&out, &vars(n), eps));
        prop_assert!(trace.iterations <= cfg.iteration_bound(n));
        check_growth(&trace, eps);
    }
}

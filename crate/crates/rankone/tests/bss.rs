use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rankone::bss::*;
use rankone::linalg::{Matrix, OrthoBasis};
use rankone::structure::StructureConfig;
use rankone::Error;

const EPS_PSD: f64 = 1e-9;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unflat(n: usize, v: &[f64]) -> Matrix {
    Matrix::from_vec(n, n, v.to_vec()).unwrap()
}

fn projector(vectors: &[Vec<f64>]) -> Matrix {
    let d = vectors[0].len();
    let mut p = Matrix::zeros(d, d);
    for v in vectors {
        p = p.add(&Matrix::outer(v, v)).unwrap();
    }
    p
}

fn solve(w: &SubspaceBasis, eps: f64, seed: u64) -> BssOutcome {
    let cfg = StructureConfig { seed, ..StructureConfig::new(eps) };
    solve_bss(w, eps, &cfg, &BssOptions::default()).unwrap()
}

#[test]
fn identity_measurement_gives_the_full_space() {
    let m = MeasurementOperator::new(Matrix::identity(9)).unwrap();
    let w = measurement_to_subspace(&m, None).unwrap();
    assert_eq!(w.dim(), 9);
    assert_eq!(w.complement_basis().len(), 0);
}

#[test]
fn projector_measurement_gives_its_range() {
    let mut r = rng(1);
    let spanning: Vec<Vec<f64>> = (0..3).map(|_| random_unit(16, &mut r)).collect();
    let ob = OrthoBasis::from_spanning(16, &spanning, 1e-10).unwrap();
    let m = MeasurementOperator::new(projector(&ob.vectors)).unwrap();
    let w = measurement_to_subspace(&m, None).unwrap();
    assert_eq!(w.dim(), 3);
    w.validate().unwrap();
    for b in &ob.vectors {
        let l = unflat(4, b);
        assert!((w.quality(&l).unwrap() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn default_threshold_keeps_only_the_top_eigenvalue() {
    let n = 3;
    let mut d = vec![0.3; 9];
    d[0] = 1.0;
    d[4] = 1.0 - 2.0 / n as f64;
    let m = MeasurementOperator::new(Matrix::diag(&d)).unwrap();
    let w = measurement_to_subspace(&m, None).unwrap();
    assert_eq!(w.dim(), 1);
    assert!((w.basis[0][(0, 0)].abs() - 1.0).abs() < 1e-12);
    assert_eq!(measurement_to_subspace(&m, Some(0.2)).unwrap().dim(), 9);
    assert!(matches!(measurement_to_subspace(&m, Some(1.5)), Err(Error::EmptySubspace)));
}

#[test]
fn measurement_outside_unit_interval_is_rejected() {
    assert!(MeasurementOperator::new(Matrix::identity(4).scale(1.5)).is_err());
    assert!(MeasurementOperator::new(Matrix::identity(4).scale(-0.5)).is_err());
    assert!(MeasurementOperator::new(Matrix::identity(3)).is_err());
}

#[test]
fn one_by_one_subspace() {
    let w = SubspaceBasis::from_spanning(1, &[Matrix::identity(1)]).unwrap();
    let out = solve(&w, 0.25, 0);
    let c = out.candidate().expect("candidate");
    assert!((c.projection_quality - 1.0).abs() < 1e-9);
    assert!(c.l[(0, 0)].abs() > 0.5);
}

#[test]
fn planted_three_by_three_is_recovered() {
    let eps = 0.25;
    for seed in 0..3 {
        let (w, plant) = planted_instance(3, 3, &mut rng(100 + seed)).unwrap();
        let l = Matrix::outer(&plant.u, &plant.v);
        assert!((w.quality(&l).unwrap() - 1.0).abs() < 1e-10);
        let out = solve(&w, eps, seed);
        let c = out.candidate().expect("candidate on a planted instance");
        assert!(c.projection_quality >= 1.0 - eps * eps, "seed {seed}: {}", c.projection_quality);
        let v = verify_candidate(c, &w, None).unwrap();
        assert!((v.quality - c.projection_quality).abs() < 1e-12);
        let trace = out.report().trace.as_ref().unwrap();
        assert!(trace.iterations <= StructureConfig::new(eps).iteration_bound(3));
    }
}

fn certified_far(n: usize, step: f64, first_seed: u64) -> (SubspaceBasis, Farness) {
    for seed in first_seed.. {
        let w = random_instance(n, 1, &mut rng(seed)).unwrap();
        let f = grid_farness(&w, step).unwrap();
        if f.certified_lower >= 0.5 {
            return (w, f);
        }
    }
    unreachable!()
}

#[test]
fn far_instances_are_not_accepted() {
    let eps = 0.25;
    for (n, step) in [(2, 0.002), (3, 0.02)] {
        let (w, f) = certified_far(n, step, 10);
        assert!(f.estimate >= f.certified_lower);
        match solve(&w, eps, 0) {
            BssOutcome::Fail { .. } => {}
            BssOutcome::Candidate { candidate, .. } => assert!(candidate.projection_quality < 1.0 - eps * eps),
        }
    }
}

#[test]
fn grid_farness_of_a_rank_one_subspace_is_zero() {
    let w = SubspaceBasis::from_spanning(2, &[Matrix::outer(&[0.6, 0.8], &[1.0, 0.0])]).unwrap();
    let f = grid_farness(&w, 0.01).unwrap();
    assert!(f.estimate < 0.02, "{f:?}");
    assert_eq!(f.certified_lower, 0.0);
}

#[test]
fn candidate_inside_the_accepting_space() {
    let mut r = rng(3);
    let a = random_unit(3, &mut r);
    let b = random_unit(3, &mut r);
    let vab = Matrix::outer(&a, &b).data;
    let other = random_unit(9, &mut r);
    let ob = OrthoBasis::from_spanning(9, &[vab, other], 1e-10).unwrap();
    let m = MeasurementOperator::new(projector(&ob.vectors).scale(1.0)).unwrap();
    let w = measurement_to_subspace(&m, None).unwrap();
    let cand = RankOneCandidate::new(a.clone(), b.clone(), &w).unwrap();
    let v = verify_candidate(&cand, &w, Some(&m)).unwrap();
    assert!((v.quality - 1.0).abs() < 1e-10);
    assert!(v.acceptance.unwrap() >= 1.0 - EPS_PSD);
    assert_eq!(v.acceptance_ok, Some(true));
}

#[test]
fn candidate_orthogonal_to_the_subspace() {
    let w = SubspaceBasis::from_spanning(2, &[Matrix::outer(&[1.0, 0.0], &[1.0, 0.0])]).unwrap();
    let cand = RankOneCandidate::new(vec![0.0, 1.0], vec![0.0, 2.0], &w).unwrap();
    assert!(verify_candidate(&cand, &w, None).unwrap().quality.abs() < 1e-15);
    let zero = RankOneCandidate::new(vec![0.0, 0.0], vec![1.0, 0.0], &w);
    match zero {
        Err(Error::ZeroCandidate) => {}
        Ok(c) => assert!(matches!(verify_candidate(&c, &w, None), Err(Error::ZeroCandidate))),
        Err(e) => panic!("{e:?}"),
    }
}

#[test]
fn quality_matches_the_complement_projector() {
    for seed in 0..20 {
        let mut r = rng(200 + seed);
        let n = 2 + (seed as usize % 3);
        let w = random_instance(n, 1 + seed as usize % (n * n - 1), &mut r).unwrap().with_complement();
        let cand = RankOneCandidate::new(random_unit(n, &mut r), random_unit(n, &mut r), &w).unwrap();
        let l = &cand.l;
        let perp: f64 = w.complement.as_ref().unwrap().iter().map(|b| b.frobenius_dot(l).powi(2)).sum();
        let want = 1.0 - perp / l.frobenius_dot(l);
        assert!((verify_candidate(&cand, &w, None).unwrap().quality - want).abs() < 1e-10);
    }
}

#[test]
fn text_formats_round_trip() {
    let mut r = rng(4);
    let (w, plant) = planted_instance(3, 4, &mut r).unwrap();
    let back = SubspaceBasis::from_text(&w.to_text()).unwrap();
    assert_eq!(back.basis, w.basis);
    assert_eq!(back.to_text(), w.to_text());
    assert_eq!(Plant::from_text(&plant.to_text()).unwrap(), plant);

    let m = MeasurementOperator::new(Matrix::diag(&[1.0, 0.5, 0.25, 0.0])).unwrap();
    assert_eq!(MeasurementOperator::from_text(&m.to_text()).unwrap().m, m.m);

    let (wc, cp) = planted_complex_instance(2, 2, &mut r).unwrap();
    assert_eq!(ComplexSubspace::from_text(&wc.to_text()).unwrap(), wc);
    assert_eq!(ComplexPlant::from_text(&cp.to_text()).unwrap(), cp);

    assert!(matches!(SubspaceBasis::from_text("SUBSPACE 2"), Err(Error::Parse { .. })));
    assert!(SubspaceBasis::from_text(&(w.to_text() + "1 2 3\n")).is_err());
}

#[test]
fn spanning_input_is_orthonormalized() {
    let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
    let b = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]]).unwrap();
    let w = SubspaceBasis::from_spanning(2, &[a.clone(), b, a.scale(3.0)]).unwrap();
    assert_eq!(w.dim(), 2);
    w.validate().unwrap();
}

#[test]
fn generators_reject_bad_dimensions() {
    let mut r = rng(5);
    assert!(matches!(planted_instance(2, 5, &mut r), Err(Error::BadDims(_))));
    assert!(matches!(random_instance(0, 1, &mut r), Err(Error::BadDims(_))));
    assert!(matches!(planted_complex_instance(2, 0, &mut r), Err(Error::BadDims(_))));
}

#[test]
fn full_complex_space_lifts_to_everything() {
    let wc = ComplexSubspace::new(2, vec![]).unwrap();
    let y = reduce_complex_to_real(&wc).unwrap();
    assert_eq!(y.dim(), 16);
}

#[test]
fn planted_complex_embedding_is_in_the_lift() {
    for seed in 0..10 {
        let (wc, cp) = planted_complex_instance(2, 1 + seed as usize % 4, &mut rng(300 + seed)).unwrap();
        let (a, b) = cp.product();
        assert!(wc.residual(&a, &b) < 1e-12);
        let y = reduce_complex_to_real(&wc).unwrap();
        assert_eq!(y.dim(), 8 + 2 * wc.dim());
        let (u, v) = cp.embed();
        assert!((y.quality(&Matrix::outer(&u, &v)).unwrap() - 1.0).abs() < 1e-12);
        // the phase-normalized plant survives the gauge
        let g = cp.gauge_normalized();
        let (ga, gb) = g.product();
        assert!(wc.residual(&ga, &gb) < 1e-12);
        assert!(g.x_im[0] == 0.0 && g.y_im[0] == 0.0);
        let yg = gauge_fix(&y).unwrap();
        let (gu, gv) = g.embed();
        assert!((yg.quality(&Matrix::outer(&gu, &gv)).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn zero_complex_subspace_has_no_rank_one_lift() {
    let n = 2;
    let mut cons = Vec::new();
    for k in 0..n * n {
        let mut c = Matrix::zeros(n, n);
        c.data[k] = 1.0;
        cons.push((c, Matrix::zeros(n, n)));
    }
    let wc = ComplexSubspace::new(n, cons).unwrap();
    assert_eq!(wc.dim(), 0);
    let y = reduce_complex_to_real(&wc).unwrap();
    assert_eq!(y.dim(), 8);
    let f = grid_farness(&y, 0.1).unwrap();
    // every unit uvᵀ keeps exactly half its mass in ker φ
    assert!((f.best_quality - 0.5).abs() < 1e-9);
    assert!(f.certified_lower >= 0.5, "{f:?}");
}

#[test]
fn dependent_complex_constraints_are_ill_formed() {
    let c = Matrix::identity(2);
    let d = Matrix::zeros(2, 2);
    // i·W is the same constraint over C
    let r = ComplexSubspace::new(2, vec![(c.clone(), d.clone()), (d, c.scale(-1.0))]);
    assert!(matches!(r, Err(Error::IllFormed(_))));
}

#[test]
fn exact_real_candidate_lifts_with_zero_residual() {
    let (wc, cp) = planted_complex_instance(2, 2, &mut rng(6)).unwrap();
    let y = reduce_complex_to_real(&wc).unwrap();
    let (u, v) = cp.embed();
    let cand = RankOneCandidate::new(u, v, &y).unwrap();
    let lift = lift_real_solution(&cand, &y, &wc).unwrap();
    assert!(lift.relative_residual() < 1e-12);
    assert!(lift.membership_residual < 1e-12);
    let (a, b) = cp.product();
    assert!(lift.x_re.sub(&a).unwrap().frobenius_norm() < 1e-12);
    assert!(lift.x_im.sub(&b).unwrap().frobenius_norm() < 1e-12);
}

#[test]
fn purely_real_candidate_lifts_to_a_real_matrix() {
    let mut r = rng(7);
    let a = random_unit(2, &mut r);
    let b = random_unit(2, &mut r);
    let plant = Matrix::outer(&a, &b);
    let mut cons = Vec::new();
    while cons.len() < 2 {
        let c = Matrix::from_vec(2, 2, random_unit(4, &mut r)).unwrap();
        let c = c.sub(&plant.scale(c.frobenius_dot(&plant))).unwrap();
        let mut t = cons.clone();
        t.push((c, Matrix::zeros(2, 2)));
        if ComplexSubspace::new(2, t.clone()).is_ok() {
            cons = t;
        }
    }
    let wc = ComplexSubspace::new(2, cons).unwrap();
    let y = reduce_complex_to_real(&wc).unwrap();
    let cand = RankOneCandidate::new(vec![a[0], a[1], 0.0, 0.0], vec![b[0], b[1], 0.0, 0.0], &y).unwrap();
    let lift = lift_real_solution(&cand, &y, &wc).unwrap();
    assert!(lift.x_im.frobenius_norm() < 1e-12);
    assert!(lift.x_re.sub(&plant).unwrap().frobenius_norm() < 1e-12);
}

#[test]
fn planted_complex_round_trip() {
    let eps = 0.3;
    for seed in 0..4u64 {
        let (wc, _) = planted_complex_instance(2, 1 + seed as usize % 2, &mut rng(400 + seed)).unwrap();
        let y = gauge_fix(&reduce_complex_to_real(&wc).unwrap()).unwrap();
        let out = solve(&y, eps, seed);
        let c = out.candidate().expect("candidate");
        let lift = lift_real_solution(c, &y, &wc).unwrap();
        assert!(lift.relative_residual() <= eps, "{lift:?}");
        assert!(lift.relative_residual() <= lift.certified_eps + 1e-10);
        assert!(lift.membership_residual < 1e-9);
    }
}

#[test]
fn block_residuals_bound_the_complex_residual() {
    for seed in 0..30u64 {
        let mut r = rng(500 + seed);
        let (wc, _) = planted_complex_instance(2, 1 + seed as usize % 3, &mut r).unwrap();
        let y = reduce_complex_to_real(&wc).unwrap();
        let cand = RankOneCandidate::new(random_unit(4, &mut r), random_unit(4, &mut r), &y).unwrap();
        let lift = lift_real_solution(&cand, &y, &wc).unwrap();
        assert!(lift.residual <= lift.block_residual_sum + 1e-10);
        assert!(lift.relative_residual() <= lift.certified_eps + 1e-10);
        assert!(lift.membership_residual < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quality_is_a_fraction(seed in 0u64..10_000, n in 1usize..5, dim_frac in 0.0f64..1.0) {
        let mut r = rng(seed);
        let dim = 1 + ((n * n - 1) as f64 * dim_frac) as usize;
        let w = random_instance(n, dim, &mut r).unwrap();
        let cand = RankOneCandidate::new(random_unit(n, &mut r), random_unit(n, &mut r), &w).unwrap();
        prop_assert!(cand.projection_quality >= -1e-12 && cand.projection_quality <= 1.0 + 1e-12);
        // scale invariance
        let scaled = RankOneCandidate::new(cand.u0.iter().map(|x| 3.0 * x).collect(), cand.v0.clone(), &w).unwrap();
        prop_assert!((scaled.projection_quality - cand.projection_quality).abs() < 1e-12);
    }

    #[test]
    fn grid_farness_bounds_every_rank_one(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let w = random_instance(2, 2, &mut r).unwrap();
        let f = grid_farness(&w, 0.05).unwrap();
        let q = w.quality(&Matrix::outer(&random_unit(2, &mut r), &random_unit(2, &mut r))).unwrap();
        prop_assert!((1.0 - q).max(0.0).sqrt() >= f.certified_lower - 1e-12);
    }
}

use ndarray::{array, Array1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsilrma::ot::{
    build_amplitude_weight, sinkhorn_row_sums, sinkhorn_unbalanced, sinkhorn_unbalanced_warm, MarginalPair,
    OtConfig,
};

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> MarginalPair {
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    MarginalPair::from_spectra(&a, &b, 1e-12).unwrap()
}

/// One bin, unit marginals: the fixed point is symmetric, nu = xi = e^{rho/(1+rho)},
/// so Q = e^{-1} nu xi = e^{-1/9} for lambda = 4, gamma = 1.
#[test]
fn single_bin_closed_form() {
    let m = MarginalPair::new(array![1.0], array![1.0], 1.0).unwrap();
    let w = build_amplitude_weight(1, 30.0).unwrap();
    let cfg = OtConfig { tol: 1e-14, max_inner_iters: 1000, ..Default::default() };
    let plan = sinkhorn_unbalanced(&m, &w, &cfg).unwrap();
    let want = (-1.0f64 / 9.0).exp();
    assert!((plan.q[[0, 0]] - want).abs() < 1e-12, "{} vs {want}", plan.q[[0, 0]]);
    assert!((plan.nu[0] - plan.xi[0]).abs() < 1e-12);
}

#[test]
fn equal_marginals_give_symmetric_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<f64> = (0..24).map(|_| rng.gen_range(0.01..1.0)).collect();
    let m = MarginalPair::from_spectra(&a, &a, 1e-12).unwrap();
    let w = build_amplitude_weight(24, 5.0).unwrap();
    let plan = sinkhorn_unbalanced(&m, &w, &OtConfig { tol: 1e-13, max_inner_iters: 5000, ..Default::default() })
        .unwrap();
    let asym = (&plan.q - &plan.q.t()).iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    assert!(asym < 1e-10, "asymmetry {asym}");
}

#[test]
fn marginal_violation_shrinks_as_gamma_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = random_pair(&mut rng, 16);
    let w = build_amplitude_weight(16, 10.0).unwrap();
    let violation = |gamma: f64| {
        let cfg = OtConfig { gamma, tol: 1e-12, max_inner_iters: 100_000, ..Default::default() };
        let plan = sinkhorn_unbalanced(&m, &w, &cfg).unwrap();
        (&plan.row_sums() - &m.a).mapv(f64::abs).sum() + (&plan.col_sums() - &m.b).mapv(f64::abs).sum()
    };
    let v: Vec<f64> = [0.1, 1.0, 10.0, 100.0, 1000.0].into_iter().map(violation).collect();
    assert!(v.windows(2).all(|p| p[1] < p[0]), "{v:?}");
}

#[test]
fn warm_start_reaches_same_plan_faster() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_pair(&mut rng, 40);
    let w = build_amplitude_weight(40, 30.0).unwrap();
    let cfg = OtConfig::default();
    let cold = sinkhorn_unbalanced(&m, &w, &cfg).unwrap();
    let warm = sinkhorn_unbalanced_warm(&m, &w, &cfg, Some(&cold.scalings)).unwrap();
    assert!(warm.iterations_run < cold.iterations_run);
    let rel = (&warm.q - &cold.q).mapv(f64::abs).sum() / cold.q.sum();
    assert!(rel < 1e-5, "relative l1 difference {rel}");
}

#[test]
fn row_sum_solver_agrees_with_full_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for n in [1, 7, 33, 129] {
        let m = random_pair(&mut rng, n);
        let w = build_amplitude_weight(n, 10.0).unwrap();
        let cfg = OtConfig::default();
        let plan = sinkhorn_unbalanced(&m, &w, &cfg).unwrap();
        let rows = sinkhorn_row_sums(&m, &w, &cfg, None).unwrap();
        let diff: Array1<f64> = &plan.row_sums() - &rows.row_sums;
        assert!(diff.iter().all(|d| d.abs() < 1e-12 * plan.q.sum().max(1.0)), "n={n}: {diff:?}");
        assert_eq!(plan.iterations_run, rows.iterations_run);
    }
}

/// Tiny marginal entries push the scalings far outside double range; the
/// solver must still return a finite plan with the right marginal balance.
#[test]
fn extreme_dynamic_range_stays_finite() {
    let n = 64;
    let a: Vec<f64> = (0..n).map(|i| if i % 5 == 0 { 1.0 } else { 1e-11 }).collect();
    let b: Vec<f64> = (0..n).map(|i| 10f64.powi(-((i % 12) as i32))).collect();
    let m = MarginalPair::from_spectra(&a, &b, 1e-12).unwrap();
    let w = build_amplitude_weight(n, 3.0).unwrap();
    let plan = sinkhorn_unbalanced(&m, &w, &OtConfig::default()).unwrap();
    assert!(plan.q.iter().all(|q| q.is_finite() && *q >= 0.0));
    let mass = plan.q.sum();
    assert!(mass > 0.0 && mass < 2.0, "mass {mass}");
}

#[test]
fn invalid_configs_are_rejected() {
    let m = MarginalPair::new(array![0.5, 0.5], array![0.5, 0.5], 1.0).unwrap();
    let w = build_amplitude_weight(2, 1.0).unwrap();
    for cfg in [
        OtConfig { lambda: 0.0, ..Default::default() },
        OtConfig { gamma: -1.0, ..Default::default() },
        OtConfig { max_inner_iters: 0, ..Default::default() },
        OtConfig { tol: f64::NAN, ..Default::default() },
    ] {
        assert!(sinkhorn_unbalanced(&m, &w, &cfg).is_err());
    }
    assert!(sinkhorn_unbalanced(&m, &build_amplitude_weight(3, 1.0).unwrap(), &OtConfig::default()).is_err());
}

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsilrma::nmf::{init_nmf, is_divergence, update_nmf, NmfModel, PlanMarginals};

fn targets(seed: u64, f: usize, t: usize) -> PlanMarginals {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PlanMarginals::new(Array2::from_shape_simple_fn((f, t), || rng.gen_range(0.01..2.0))).unwrap()
}

/// (c u, v / c) describes the same variances, and one update preserves that.
#[test]
fn updates_commute_with_factor_rescaling() {
    let p = targets(1, 12, 9);
    let base = init_nmf(12, 9, 3, 7).unwrap();
    let c = 37.5;
    let scaled = NmfModel::new(&base.u * c, &base.v / c).unwrap();
    let (a, b) = (update_nmf(&base, &p).unwrap(), update_nmf(&scaled, &p).unwrap());
    let rel = (&a.variance() - &b.variance()).mapv(f64::abs).sum() / a.variance().sum();
    assert!(rel < 1e-12, "{rel}");
    assert!(((&b.u / c) - &a.u).iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn exact_low_rank_data_is_recovered() {
    let truth = init_nmf(10, 14, 2, 99).unwrap();
    let p = PlanMarginals::new(truth.variance()).unwrap();
    let mut model = init_nmf(10, 14, 2, 3).unwrap();
    let start = is_divergence(&p.p, &model.variance());
    for _ in 0..3000 {
        model.update(&p).unwrap();
    }
    let end = is_divergence(&p.p, &model.variance());
    assert!(end < 1e-6 && end < start * 1e-4, "D_IS {start} -> {end}");
}

#[test]
fn factors_stay_positive_with_zero_targets() {
    let mut p = targets(2, 8, 8).p;
    p.row_mut(3).fill(0.0);
    let p = PlanMarginals::new(p).unwrap();
    let mut model = init_nmf(8, 8, 2, 1).unwrap();
    for _ in 0..200 {
        model.update(&p).unwrap();
    }
    assert!(model.u.iter().chain(model.v.iter()).all(|x| x.is_finite() && *x > 0.0));
}

#[test]
fn shape_and_value_errors() {
    let mut model = init_nmf(4, 5, 2, 0).unwrap();
    assert!(model.update(&targets(0, 5, 4)).is_err());
    assert!(PlanMarginals::new(Array2::from_elem((2, 2), -1.0)).is_err());
    assert!(init_nmf(0, 5, 2, 0).is_err());
    assert!(NmfModel::new(Array2::zeros((3, 2)), Array2::ones((2, 3))).is_err());
}

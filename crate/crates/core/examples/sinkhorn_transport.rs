//! Weighted unbalanced transport between two spectra: objective trace,
//! marginal violation as gamma grows, and the effect of the band width.
//!
//! ```text
//! cargo run --release --example sinkhorn_transport
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsilrma::ot::{
    build_amplitude_weight, estimate_variances, sinkhorn_objective_trace, sinkhorn_unbalanced, MarginalPair,
    OtConfig,
};

fn main() -> wsilrma::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 32;
    let power: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let model: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let m = MarginalPair::from_spectra(&power, &model, 1e-12)?;

    let weight = build_amplitude_weight(n, 4.0)?;
    let (plan, trace) = sinkhorn_objective_trace(&m, &weight, &OtConfig::default())?;
    println!("objective over {} sweeps:", plan.iterations_run);
    for (i, v) in trace.iter().enumerate().take(8) {
        println!("  {i:>3}: {v:.8}");
    }
    println!("  ...  {:.8} (converged: {})", trace.last().unwrap(), plan.converged);

    println!("marginal violation |Q1-a|_1 + |Q^T1-b|_1:");
    for gamma in [1.0, 1e2, 1e4, 1e6] {
        let cfg = OtConfig { gamma, max_inner_iters: 5000, ..Default::default() };
        let plan = sinkhorn_unbalanced(&m, &weight, &cfg)?;
        let viol = (plan.row_sums() - &m.a).mapv(f64::abs).sum() + (plan.col_sums() - &m.b).mapv(f64::abs).sum();
        println!("  gamma {gamma:>9.0e}: {viol:.3e} after {} sweeps", plan.iterations_run);
    }

    for eta in [1.0, 4.0, 16.0] {
        let w = build_amplitude_weight(n, eta)?;
        let plan = sinkhorn_unbalanced(&m, &w, &OtConfig::default())?;
        let var = estimate_variances(&plan, m.total_energy);
        let spread: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| plan.q[[i, j]] * (i as f64 - j as f64).abs())
            .sum::<f64>()
            / plan.q.sum();
        println!("eta {eta:>4}: mean transport distance {spread:.2} bins, variance[0..4] = {:.3?}", &var.to_vec()[..4]);
    }
    Ok(())
}

//! SDR/SIR of constructed estimates, including the energy decomposition.
//!
//! ```text
//! cargo run --release --example bss_metrics
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsilrma::eval::bss_eval;
use wsilrma::TimeSignal;

fn main() -> wsilrma::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let len = 16000;
    let mut noise = || -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let (s1, s2, art) = (noise(), noise(), noise());
    let refs = TimeSignal::from_channels(&[s1.clone(), s2.clone()], 16000)?;

    // Estimates are listed in swapped order; the matching recovers it.
    let e1: Vec<f64> = (0..len).map(|i| s2[i] + 0.1 * s1[i] + 0.03 * art[i]).collect();
    let e2: Vec<f64> = (0..len).map(|i| s1[i] - 0.05 * s2[i]).collect();
    let est = TimeSignal::from_channels(&[e1, e2], 16000)?;

    let report = bss_eval(&est, &refs, 32)?;
    for i in 0..2 {
        let d = report.energies[i];
        println!(
            "reference {i} <- estimate {}: SDR {:6.2} dB  SIR {:6.2} dB  (target {:.1}, interf {:.2}, artif {:.2}, total {:.1})",
            report.permutation[i], report.sdr[i], report.sir[i], d.target, d.interference, d.artifact, d.total
        );
    }
    Ok(())
}

//! Analysis/synthesis round trip and the COLA condition.
//!
//! ```text
//! cargo run --release --example stft_roundtrip
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsilrma::{analyze, synthesize, StftConfig, TimeSignal, Window};

fn main() -> wsilrma::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let channels: Vec<Vec<f64>> = (0..3).map(|_| (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let x = TimeSignal::from_channels(&channels, 16000)?;

    for (frame_len, hop, window) in [(1024, 512, Window::SqrtHann), (512, 128, Window::Hann), (256, 64, Window::SqrtHann)] {
        let cfg = StftConfig::new(frame_len, hop, window)?;
        let spec = analyze(&x, &cfg)?;
        let y = synthesize(&spec, &cfg)?;
        let err = (y.samples() - x.samples()).mapv(|v| v * v).sum().sqrt();
        let rel = err / x.samples().mapv(|v| v * v).sum().sqrt();
        println!(
            "{window:?} {frame_len}/{hop}: {} bins x {} frames, relative error {rel:.2e}",
            spec.n_bins(),
            spec.n_frames()
        );
    }

    let bad = StftConfig { frame_len: 512, hop: 384, window: Window::SqrtHann };
    println!("512/384 sqrt-Hann is COLA: {}", bad.is_cola());
    if let Err(e) = bad.validate() {
        println!("rejected: {e}");
    }
    Ok(())
}

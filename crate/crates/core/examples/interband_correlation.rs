//! Correlation between frequency bins of a speech-like signal: neighbouring
//! bins are strongly correlated, distant bins much less.
//!
//! ```text
//! cargo run --release --example interband_correlation -- [input.wav] [out.csv]
//! ```

use wsilrma::io::{load_wav, modulated_noise};
use wsilrma::spectral::{export_correlation, interband_correlation};
use wsilrma::{analyze, StftConfig, Window};

fn main() -> wsilrma::Result<()> {
    let mut args = std::env::args().skip(1);
    let x = match args.next() {
        Some(path) => load_wav(path)?,
        None => modulated_noise(4 * 8000, 8000, 11)?,
    };
    let cfg = StftConfig::new(128, 64, Window::Hann)?;
    let corr = interband_correlation(&analyze(&x, &cfg)?, 0)?;
    for offset in [1, 2, 5, 10, 20] {
        println!("mean |r(f, f+{offset:>2})| = {:.4}", corr.mean_offset_magnitude(offset));
    }
    println!(
        "ratio offset 1 / offset 10 = {:.2}",
        corr.mean_offset_magnitude(1) / corr.mean_offset_magnitude(10)
    );
    if let Some(out) = args.next() {
        export_correlation(&corr, &out)?;
        println!("wrote {out}");
    }
    Ok(())
}

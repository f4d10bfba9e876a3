//! Simulates a reverberant two-source mixture and separates it with all
//! three backends.
//!
//! ```text
//! cargo run --release --example separate_mixture -- [t60] [outer_iters]
//! ```

use std::time::Instant;

use wsilrma::eval::{bss_eval, sir_improvement};
use wsilrma::io::room::Condition;
use wsilrma::io::{mix, modulated_noise};
use wsilrma::{analyze, separate, synthesize, Backend, SeparatorConfig, StftConfig, TimeSignal, Window};

fn main() -> wsilrma::Result<()> {
    let mut args = std::env::args().skip(1);
    let t60: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let outer_iters: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let fs = 8000;
    let len = 4 * fs as usize;

    let room = Condition::Wide.room(t60, fs);
    let sources = [modulated_noise(len, fs, 21)?, modulated_noise(len, fs, 22)?];
    let mixture = mix(&sources, &room)?;
    let refs = mixture.images_at(0)?;
    let ch0 = mixture.mixture.channel(0).to_vec();
    let unprocessed = TimeSignal::from_channels(&[ch0.clone(), ch0], fs)?;
    let before = bss_eval(&unprocessed, &refs, 128)?;
    println!("input SIR at mic 0: {:.2?} dB", before.sir);

    let stft = StftConfig::new(512, 256, Window::SqrtHann)?;
    let x = analyze(&mixture.mixture, &stft)?;
    for backend in [Backend::Auxiva, Backend::Ilrma, Backend::Wsilrma] {
        let cfg = SeparatorConfig { backend, outer_iters, eta: 30.0, ..Default::default() };
        let started = Instant::now();
        let out = separate(&x, &cfg)?;
        let y = synthesize(&out.y, &stft)?;
        let after = bss_eval(&y, &refs, 128)?;
        println!(
            "{backend:>8}: SDR {:6.2?}  SIR {:6.2?}  ΔSIR {:6.2?}  ({:.1?}, objective {:.1} -> {:.1})",
            after.sdr,
            after.sir,
            sir_improvement(&before, &after)?,
            started.elapsed(),
            out.trace.objective[0],
            out.trace.objective.last().unwrap()
        );
    }
    Ok(())
}

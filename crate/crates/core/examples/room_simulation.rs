//! Image-source impulse responses in the 8×8×3 m benchmark room: Sabine
//! absorption, Schroeder decay and a two-source convolutive mixture.
//!
//! ```text
//! cargo run --release --example room_simulation -- [out_dir]
//! ```

use std::time::Instant;

use wsilrma::io::room::{decay_time, sabine_absorption, t30_estimate, Absorption, Condition};
use wsilrma::io::{generate_rir, mix, modulated_noise, save_wav, WavEncoding};

fn main() -> wsilrma::Result<()> {
    let fs = 16000;
    println!("{:>6} {:>8} {:>10} {:>10} {:>8}", "T60", "alpha", "EDC-60dB", "T30 fit", "time");
    for t60 in [0.2, 0.4, 0.6] {
        let room = Condition::Near.room(t60, fs);
        let Absorption::Coefficient(alpha) = sabine_absorption(&room) else { unreachable!() };
        let started = Instant::now();
        let h = generate_rir(&room, 0, 0)?;
        let elapsed = started.elapsed();
        let h = h.channel(0).to_vec();
        let edc = decay_time(&h, fs, -60.0).unwrap_or(f64::NAN);
        let t30 = t30_estimate(&h, fs).unwrap_or(f64::NAN);
        println!("{t60:>6.2} {alpha:>8.4} {edc:>9.3}s {t30:>9.3}s {:>7.0?}", elapsed);
    }

    let room = Condition::Near.room(0.2, fs);
    let len = 3 * fs as usize;
    let sources = [modulated_noise(len, fs, 1)?, modulated_noise(len, fs, 2)?];
    let mixture = mix(&sources, &room)?;
    println!(
        "mixed {} sources into {} mics, {} samples, gain {:.3}",
        sources.len(),
        mixture.mixture.n_channels(),
        mixture.mixture.len(),
        mixture.gain
    );
    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir)?;
        let path = std::path::Path::new(&dir).join("mixture.wav");
        save_wav(&mixture.mixture, &path, WavEncoding::Float32)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

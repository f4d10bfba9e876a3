//! Small benchmark over the band-weight width, resumable on disk.
//!
//! ```text
//! cargo run --release --example eta_sweep -- [out_dir]
//! ```

use wsilrma::io::experiment::ExperimentPlan;
use wsilrma::io::room::Condition;
use wsilrma::io::run_experiment;
use wsilrma::{Backend, SeparatorConfig, StftConfig, Window};

fn main() -> wsilrma::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "eta_sweep_out".into());
    let plan = ExperimentPlan {
        conditions: vec![Condition::Wide.into()],
        eta_grid: vec![1.0, 10.0, 100.0],
        t60_grid: vec![0.0],
        n_mixtures: 1,
        backends: vec![Backend::Wsilrma, Backend::Ilrma],
        duration: 2.0,
        sample_rate: 8000,
        stft: StftConfig::new(256, 128, Window::SqrtHann)?,
        separator: SeparatorConfig { outer_iters: 20, ..Default::default() },
        eval_filter_len: 64,
        output_dir: out.into(),
        ..Default::default()
    };
    let summary = run_experiment(&plan)?;
    println!("computed {} rows, resumed {}", summary.computed, summary.skipped);
    for row in &summary.rows {
        let eta = row.eta.map_or("-".to_string(), |e| format!("{e}"));
        println!(
            "{:>8} eta {:>5}: SIR {:6.2?} dB, ΔSIR {:6.2?} dB, {:.1}s",
            row.backend.name(),
            eta,
            row.sir,
            row.sir_improvement,
            row.runtime_s
        );
    }
    println!("results in {}", plan.output_dir.display());
    Ok(())
}

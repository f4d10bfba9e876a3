//! Command-line front end. Errors print one `error: kind=<id> msg=<text>`
//! line to stderr; exit status is 1 for usage problems, 2 for runtime
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use wsilrma::eval::{bss_eval, MetricReport};
use wsilrma::io::experiment::{ConditionSpec, FULL_ETA_GRID};
use wsilrma::io::room::{Condition, RoomSpec};
use wsilrma::io::{generate_rir, load_wav, mix, modulated_noise, run_experiment, save_wav, FileConfig, WavEncoding};
use wsilrma::spectral::{export_correlation, interband_correlation};
use wsilrma::{analyze, separate, synthesize, Backend, Error, Result, TimeSignal, Window};

#[derive(Parser)]
#[command(name = "wsilrma", version, about = "Blind source separation toolkit")]
struct Cli {
    /// TOML file overriding built-in defaults; flags override the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Separate one multichannel WAV into per-source WAVs and a JSON report.
    Separate {
        input: PathBuf,
        #[arg(long, default_value = "separated")]
        out_dir: PathBuf,
        /// Clean references (one WAV per source) for an SDR/SIR report.
        #[arg(long, num_args = 1..)]
        references: Vec<PathBuf>,
        #[arg(long, default_value_t = 512)]
        filter_len: usize,
        #[command(flatten)]
        sep: SeparatorArgs,
        #[command(flatten)]
        stft: StftArgs,
    },
    /// Inter-band correlation magnitudes of one channel as a CSV grid.
    Corr {
        input: PathBuf,
        #[arg(long, default_value = "correlation.csv")]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        #[command(flatten)]
        stft: StftArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate a benchmark room: RIRs, source images and the mixture.
    Simulate {
        #[arg(long, default_value = "simulated")]
        out_dir: PathBuf,
        /// Geometry: 1 (10°/20°) or 2 (45°/55°).
        #[arg(long, default_value_t = 1)]
        condition: usize,
        #[arg(long, default_value_t = 0.2)]
        t60: f64,
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
        /// Seconds of synthetic source signal when no sources are given.
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        /// Dry mono source WAVs (one per source position).
        #[arg(long, num_args = 1..)]
        sources: Vec<PathBuf>,
        #[arg(long)]
        max_order: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the benchmark grid and write results.csv / results.json.
    Bench {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        n_mixtures: Option<usize>,
        /// Comma-separated list, or `full` for the complete candidate grid.
        #[arg(long)]
        eta_grid: Option<String>,
        #[arg(long, value_delimiter = ',')]
        t60_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        backends: Option<Vec<Backend>>,
        /// Comma-separated condition ids (1, 2).
        #[arg(long, value_delimiter = ',')]
        conditions: Option<Vec<usize>>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        sample_rate: Option<u32>,
        #[arg(long)]
        filter_len: Option<usize>,
        /// Recompute every row even if results exist.
        #[arg(long)]
        no_resume: bool,
        #[command(flatten)]
        sep: SeparatorArgs,
        #[command(flatten)]
        stft: StftArgs,
    },
    /// SDR/SIR of estimates against references (both multichannel WAVs).
    Eval {
        estimates: PathBuf,
        references: PathBuf,
        #[arg(long, default_value_t = 512)]
        filter_len: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args, Default)]
struct SeparatorArgs {
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_projection_back: bool,
    #[arg(long)]
    reference_channel: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long)]
    max_inner_iters: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eps_floor: Option<f64>,
}

#[derive(Args, Default)]
struct StftArgs {
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    window: Option<Window>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl SeparatorArgs {
    fn apply(self, cfg: &mut wsilrma::SeparatorConfig) {
        set(&mut cfg.backend, self.backend);
        set(&mut cfg.outer_iters, self.outer_iters);
        set(&mut cfg.eta, self.eta);
        set(&mut cfg.rank, self.rank);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.reference_channel, self.reference_channel);
        set(&mut cfg.ot.lambda, self.lambda);
        set(&mut cfg.ot.gamma, self.gamma);
        set(&mut cfg.ot.max_inner_iters, self.max_inner_iters);
        set(&mut cfg.ot.tol, self.tol);
        set(&mut cfg.ot.eps_floor, self.eps_floor);
        if self.no_projection_back {
            cfg.projection_back = false;
        }
    }
}

impl StftArgs {
    fn apply(self, cfg: &mut wsilrma::StftConfig) -> Result<()> {
        set(&mut cfg.frame_len, self.frame_len);
        set(&mut cfg.hop, self.hop);
        set(&mut cfg.window, self.window);
        cfg.validate()
    }
}

fn parse_eta_grid(s: &str) -> Result<Vec<f64>> {
    if s == "full" {
        return Ok(FULL_ETA_GRID.to_vec());
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("eta grid '{v}': {e}"))))
        .collect()
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn report_json(r: &MetricReport) -> serde_json::Value {
    json!({ "sdr": r.sdr, "sir": r.sir, "permutation": r.permutation })
}

fn run(cli: Cli) -> Result<()> {
    let mut file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Separate { input, out_dir, references, filter_len, sep, stft } => {
            sep.apply(&mut file.separator);
            stft.apply(&mut file.stft)?;
            file.separator.validate()?;
            let x = load_wav(&input)?;
            let spec = analyze(&x, &file.stft)?;
            let out = separate(&spec, &file.separator)?;
            let y = synthesize(&out.y, &file.stft)?;
            std::fs::create_dir_all(&out_dir)?;
            for (n, src) in y.split_channels().iter().enumerate() {
                save_wav(src, out_dir.join(format!("source_{n}.wav")), WavEncoding::Float32)?;
            }
            let metrics = if references.is_empty() {
                None
            } else {
                // Multichannel references (e.g. source images) are read at the
                // projection-back channel.
                let ch = file.separator.reference_channel;
                let refs = references
                    .iter()
                    .map(|p| {
                        let r = load_wav(p)?;
                        let c = if r.n_channels() > ch { ch } else { 0 };
                        TimeSignal::mono(r.channel(c).to_vec(), r.sample_rate())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(bss_eval(&y, &TimeSignal::stack(&refs)?, filter_len)?)
            };
            let report = json!({
                "config": file.separator,
                "stft": file.stft,
                "converged": out.trace.converged(),
                "trace": out.trace,
                "metrics": metrics.as_ref().map(report_json),
            });
            write_json(&out_dir.join("report.json"), &report)?;
            if let Some(m) = metrics {
                println!("sdr={:?} sir={:?}", m.sdr, m.sir);
            }
            println!("wrote {} sources to {}", y.n_channels(), out_dir.display());
        }
        Command::Corr { input, output, channel, stft, seed: _ } => {
            stft.apply(&mut file.stft)?;
            let x = load_wav(&input)?;
            let corr = interband_correlation(&analyze(&x, &file.stft)?, channel)?;
            export_correlation(&corr, &output)?;
            println!(
                "mean|r(f,f+1)|={:.4} mean|r(f,f+10)|={:.4} undefined_bins={}",
                corr.mean_offset_magnitude(1),
                corr.mean_offset_magnitude(10),
                corr.undefined.iter().filter(|&&u| u).count()
            );
        }
        Command::Simulate { out_dir, condition, t60, sample_rate, duration, sources, max_order, seed } => {
            let room = RoomSpec {
                max_order,
                ..Condition::from_index(condition)?.room(t60, sample_rate)
            };
            let n = room.source_positions.len();
            let dry: Vec<TimeSignal> = if sources.is_empty() {
                let len = (duration * sample_rate as f64).round() as usize;
                let seed = seed.unwrap_or(0);
                (0..n).map(|k| modulated_noise(len, sample_rate, seed * 31 + k as u64)).collect::<Result<_>>()?
            } else {
                let loaded = sources.iter().map(load_wav).collect::<Result<Vec<_>>>()?;
                let len = loaded.iter().map(TimeSignal::len).min().unwrap_or(0);
                loaded
                    .iter()
                    .map(|s| TimeSignal::mono(s.channel(0).iter().take(len).cloned().collect(), s.sample_rate()))
                    .collect::<Result<_>>()?
            };
            std::fs::create_dir_all(&out_dir)?;
            let mixture = mix(&dry, &room)?;
            save_wav(&mixture.mixture, out_dir.join("mixture.wav"), WavEncoding::Float32)?;
            for (k, im) in mixture.images.iter().enumerate() {
                save_wav(im, out_dir.join(format!("image_{k}.wav")), WavEncoding::Float32)?;
                save_wav(&dry[k], out_dir.join(format!("dry_{k}.wav")), WavEncoding::Float32)?;
                for m in 0..room.mic_positions.len() {
                    let h = generate_rir(&room, k, m)?;
                    save_wav(&h, out_dir.join(format!("rir_s{k}_m{m}.wav")), WavEncoding::Float32)?;
                }
            }
            write_json(&out_dir.join("room.json"), &serde_json::to_value(&room)?)?;
            println!("wrote mixture of {n} sources to {}", out_dir.display());
        }
        Command::Bench {
            out_dir,
            corpus,
            n_mixtures,
            eta_grid,
            t60_grid,
            backends,
            conditions,
            duration,
            sample_rate,
            filter_len,
            no_resume,
            sep,
            stft,
        } => {
            let plan = &mut file.bench;
            set(&mut plan.seed, sep.seed);
            sep.apply(&mut plan.separator);
            stft.apply(&mut plan.stft)?;
            set(&mut plan.output_dir, out_dir);
            if corpus.is_some() {
                plan.corpus = corpus;
            }
            set(&mut plan.n_mixtures, n_mixtures);
            set(&mut plan.eta_grid, eta_grid.as_deref().map(parse_eta_grid).transpose()?);
            set(&mut plan.t60_grid, t60_grid);
            set(&mut plan.backends, backends);
            if let Some(ids) = conditions {
                plan.conditions = ids
                    .into_iter()
                    .map(|i| Condition::from_index(i).map(ConditionSpec::from))
                    .collect::<Result<_>>()?;
            }
            set(&mut plan.duration, duration);
            set(&mut plan.sample_rate, sample_rate);
            set(&mut plan.eval_filter_len, filter_len);
            if no_resume {
                plan.resume = false;
            }
            let summary = run_experiment(plan)?;
            let failed = summary.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "rows={} computed={} resumed={} failed={} out={}",
                summary.rows.len(),
                summary.computed,
                summary.skipped,
                failed,
                plan.output_dir.display()
            );
        }
        Command::Eval { estimates, references, filter_len, seed: _ } => {
            let est = load_wav(&estimates)?;
            let refs = load_wav(&references)?;
            let report = bss_eval(&est, &refs, filter_len)?;
            println!("{}", report_json(&report));
        }
    }
    Ok(())
}

fn is_usage(e: &Error) -> bool {
    matches!(e, Error::InvalidArgument(_) | Error::Config(_) | Error::NotCola { .. })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: kind=usage msg={first}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: kind={} msg={msg}", e.kind());
            ExitCode::from(if is_usage(&e) { 1 } else { 2 })
        }
    }
}

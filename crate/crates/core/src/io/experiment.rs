//! Batch benchmark over rooms, reverberation times, backends and η.
//!
//! Every `(condition, t60, backend, eta, mixture)` job yields one
//! [`ResultRow`]. Rows are persisted after each job (write to a temporary
//! file, then rename) as `results.json`, `results.csv` and
//! `traces/<key>.json`; a rerun with `resume` skips every row whose key is
//! already present.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{bss_eval, sdr_improvement, sir_improvement, MetricReport};
use crate::io::room::{mix, Condition, Mixture, RoomSpec};
use crate::io::synth::modulated_noise;
use crate::io::wav::load_wav;
use crate::separator::{separate, Backend, ConvergenceTrace, SeparatorConfig};
use crate::stft::{analyze, synthesize, StftConfig, TimeSignal};

/// Full candidate list for the band-weight width, in bins.
pub const FULL_ETA_GRID: [f64; 25] = [
    1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 15.0, 20.0, 30.0, 50.0, 70.0, 100.0, 125.0,
    150.0, 175.0, 200.0, 250.0, 300.0, 400.0, 500.0, 1000.0,
];

pub const CSV_HEADER: [&str; 16] = [
    "key",
    "condition",
    "t60",
    "backend",
    "eta",
    "mixture_id",
    "source",
    "sdr",
    "sir",
    "input_sdr",
    "input_sir",
    "sdr_improvement",
    "sir_improvement",
    "runtime_s",
    "converged",
    "error",
];

/// A room geometry whose reverberation time is taken from the plan's grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    /// Identifier used in row keys and output columns.
    pub id: usize,
    pub room: RoomSpec,
}

impl From<Condition> for ConditionSpec {
    fn from(c: Condition) -> Self {
        Self { id: c.index(), room: c.room(0.0, 16000) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub conditions: Vec<ConditionSpec>,
    pub eta_grid: Vec<f64>,
    pub t60_grid: Vec<f64>,
    pub n_mixtures: usize,
    pub backends: Vec<Backend>,
    pub seed: u64,
    /// Signal length in seconds.
    pub duration: f64,
    pub sample_rate: u32,
    /// Directory of clean mono WAVs; synthetic modulated noise when absent.
    pub corpus: Option<PathBuf>,
    pub stft: StftConfig,
    /// Base separator settings; `backend`, `eta` and `seed` are set per job.
    pub separator: SeparatorConfig,
    /// Distortion filter length for the metrics.
    pub eval_filter_len: usize,
    pub output_dir: PathBuf,
    pub resume: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            conditions: vec![Condition::Near.into(), Condition::Wide.into()],
            eta_grid: vec![10.0, 30.0, 100.0],
            t60_grid: vec![0.0, 0.2, 0.4, 0.6],
            n_mixtures: 5,
            backends: vec![Backend::Wsilrma, Backend::Ilrma, Backend::Auxiva],
            seed: 0,
            duration: 5.0,
            sample_rate: 16000,
            corpus: None,
            stft: StftConfig::default(),
            separator: SeparatorConfig::default(),
            eval_filter_len: 512,
            output_dir: PathBuf::from("bench_out"),
            resume: true,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.conditions.is_empty() || self.t60_grid.is_empty() || self.backends.is_empty() {
            return Err(Error::InvalidArgument("conditions, t60 grid and backends must be nonempty".into()));
        }
        if self.backends.iter().any(|b| b.uses_eta()) && self.eta_grid.is_empty() {
            return Err(Error::InvalidArgument("eta grid must be nonempty".into()));
        }
        if self.eta_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidArgument(format!("bad eta grid {:?}", self.eta_grid)));
        }
        if self.t60_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument(format!("bad t60 grid {:?}", self.t60_grid)));
        }
        if self.n_mixtures == 0 || !(self.duration > 0.0) || self.sample_rate == 0 {
            return Err(Error::InvalidArgument("n_mixtures, duration and sample_rate must be > 0".into()));
        }
        self.stft.validate()?;
        for c in &self.conditions {
            self.room_for(c, 0.0).validate()?;
        }
        Ok(())
    }

    fn room_for(&self, c: &ConditionSpec, t60: f64) -> RoomSpec {
        RoomSpec { t60, sample_rate: self.sample_rate, ..c.room.clone() }
    }

    /// All jobs in output order.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for c in &self.conditions {
            for &t60 in &self.t60_grid {
                for mixture_id in 0..self.n_mixtures {
                    for &backend in &self.backends {
                        let etas: Vec<Option<f64>> = if backend.uses_eta() {
                            self.eta_grid.iter().map(|&e| Some(e)).collect()
                        } else {
                            vec![None]
                        };
                        for eta in etas {
                            jobs.push(Job { condition: c.id, t60, backend, eta, mixture_id });
                        }
                    }
                }
            }
        }
        jobs
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Job {
    pub condition: usize,
    pub t60: f64,
    pub backend: Backend,
    pub eta: Option<f64>,
    pub mixture_id: usize,
}

impl Job {
    pub fn key(&self) -> String {
        let eta = self.eta.map_or_else(|| "none".to_string(), |e| format!("{e}"));
        format!(
            "c{}_t{:.0}ms_{}_eta{}_m{}",
            self.condition,
            self.t60 * 1000.0,
            self.backend.name(),
            eta,
            self.mixture_id
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub key: String,
    pub condition: usize,
    pub t60: f64,
    pub backend: Backend,
    /// `None` for backends without a band weight.
    pub eta: Option<f64>,
    pub mixture_id: usize,
    /// Per-source metrics, indexed by reference source. Empty on error.
    pub sdr: Vec<f64>,
    pub sir: Vec<f64>,
    pub input_sdr: Vec<f64>,
    pub input_sir: Vec<f64>,
    pub sdr_improvement: Vec<f64>,
    pub sir_improvement: Vec<f64>,
    pub runtime_s: f64,
    pub converged: bool,
    pub error: Option<String>,
}

impl ResultRow {
    fn failed(job: &Job, err: &Error, runtime_s: f64) -> Self {
        Self {
            key: job.key(),
            condition: job.condition,
            t60: job.t60,
            backend: job.backend,
            eta: job.eta,
            mixture_id: job.mixture_id,
            sdr: Vec::new(),
            sir: Vec::new(),
            input_sdr: Vec::new(),
            input_sir: Vec::new(),
            sdr_improvement: Vec::new(),
            sir_improvement: Vec::new(),
            runtime_s,
            converged: false,
            error: Some(format!("{}: {err}", err.kind())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    /// Rows of the whole plan in job order.
    pub rows: Vec<ResultRow>,
    /// Jobs run in this invocation (the rest were resumed).
    pub computed: usize,
    pub skipped: usize,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

/// Renders rows as CSV, one line per (row, source); failed rows get a
/// single line with empty metric fields.
pub fn rows_to_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let common = [
            r.key.clone(),
            r.condition.to_string(),
            fmt_num(r.t60),
            r.backend.name().to_string(),
            r.eta.map(fmt_num).unwrap_or_default(),
            r.mixture_id.to_string(),
        ];
        let tail = [fmt_num(r.runtime_s), r.converged.to_string(), r.error.clone().unwrap_or_default()];
        if r.sdr.is_empty() {
            let blanks = vec![String::new(); 7];
            w.write_record(common.iter().chain(&blanks).chain(&tail))?;
            continue;
        }
        for s in 0..r.sdr.len() {
            let metrics = [
                s.to_string(),
                fmt_num(r.sdr[s]),
                fmt_num(r.sir[s]),
                fmt_num(r.input_sdr[s]),
                fmt_num(r.input_sir[s]),
                fmt_num(r.sdr_improvement[s]),
                fmt_num(r.sir_improvement[s]),
            ];
            w.write_record(common.iter().chain(&metrics).chain(&tail))?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Loads sorted `*.wav` paths from `dir`.
fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "corpus {} needs at least two WAV files",
            dir.display()
        )));
    }
    Ok(files)
}

fn fit_length(x: &TimeSignal, len: usize) -> Result<TimeSignal> {
    let mut v: Vec<f64> = x.channel(0).iter().take(len).cloned().collect();
    v.resize(len, 0.0);
    TimeSignal::mono(v, x.sample_rate())
}

/// Dry source signals for one mixture.
pub fn mixture_sources(plan: &ExperimentPlan, n_sources: usize, mixture_id: usize) -> Result<Vec<TimeSignal>> {
    let len = (plan.duration * plan.sample_rate as f64).round() as usize;
    let mix_seed = plan.seed.wrapping_mul(1_000_003).wrapping_add(mixture_id as u64);
    match &plan.corpus {
        None => (0..n_sources)
            .map(|k| modulated_noise(len, plan.sample_rate, mix_seed.wrapping_mul(31).wrapping_add(k as u64)))
            .collect(),
        Some(dir) => {
            let files = corpus_files(dir)?;
            if files.len() < n_sources {
                return Err(Error::InvalidArgument(format!(
                    "corpus has {} files for {n_sources} sources",
                    files.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed);
            files
                .choose_multiple(&mut rng, n_sources)
                .map(|p| {
                    let x = load_wav(p)?;
                    if x.sample_rate() != plan.sample_rate {
                        return Err(Error::ConfigMismatch(format!(
                            "{} is {} Hz, plan uses {} Hz",
                            p.display(),
                            x.sample_rate(),
                            plan.sample_rate
                        )));
                    }
                    fit_length(&x, len)
                })
                .collect()
        }
    }
}

/// Separation and metrics for one prepared mixture.
pub fn evaluate_job(
    plan: &ExperimentPlan,
    job: &Job,
    mixture: &Mixture,
) -> Result<(ResultRow, ConvergenceTrace)> {
    let cfg = SeparatorConfig {
        backend: job.backend,
        eta: job.eta.unwrap_or(plan.separator.eta),
        seed: plan.seed.wrapping_add(job.mixture_id as u64),
        ..plan.separator.clone()
    };
    let reference = cfg.reference_channel;
    let started = Instant::now();
    let x = analyze(&mixture.mixture, &plan.stft)?;
    let out = separate(&x, &cfg)?;
    let y = synthesize(&out.y, &plan.stft)?;
    let runtime_s = started.elapsed().as_secs_f64();

    let refs = mixture.images_at(reference)?;
    let n = refs.n_channels();
    let ch = mixture.mixture.channel(reference).to_vec();
    let fs = refs.sample_rate();
    let unprocessed = TimeSignal::stack(
        &(0..n).map(|_| TimeSignal::mono(ch.clone(), fs)).collect::<Result<Vec<_>>>()?,
    )?;
    let before: MetricReport = bss_eval(&unprocessed, &refs, plan.eval_filter_len)?;
    let after: MetricReport = bss_eval(&y, &refs, plan.eval_filter_len)?;
    let row = ResultRow {
        key: job.key(),
        condition: job.condition,
        t60: job.t60,
        backend: job.backend,
        eta: job.eta,
        mixture_id: job.mixture_id,
        sdr_improvement: sdr_improvement(&before, &after)?,
        sir_improvement: sir_improvement(&before, &after)?,
        sdr: after.sdr,
        sir: after.sir,
        input_sdr: before.sdr,
        input_sir: before.sir,
        runtime_s,
        converged: out.trace.converged(),
        error: None,
    };
    Ok((row, out.trace))
}

struct Store {
    dir: PathBuf,
    rows: BTreeMap<String, ResultRow>,
}

impl Store {
    fn open(dir: &Path, resume: bool) -> Result<Self> {
        std::fs::create_dir_all(dir.join("traces"))?;
        let json = dir.join("results.json");
        let rows = if resume && json.exists() {
            let prev: Vec<ResultRow> = serde_json::from_slice(&std::fs::read(&json)?)?;
            prev.into_iter().map(|r| (r.key.clone(), r)).collect()
        } else {
            BTreeMap::new()
        };
        Ok(Self { dir: dir.to_path_buf(), rows })
    }

    fn ordered(&self, jobs: &[Job]) -> Vec<ResultRow> {
        jobs.iter().filter_map(|j| self.rows.get(&j.key()).cloned()).collect()
    }

    fn insert(&mut self, row: ResultRow, trace: Option<&ConvergenceTrace>, jobs: &[Job]) -> Result<()> {
        if let Some(trace) = trace {
            let path = self.dir.join("traces").join(format!("{}.json", row.key));
            write_atomic(&path, &serde_json::to_vec_pretty(trace)?)?;
        }
        self.rows.insert(row.key.clone(), row);
        let rows = self.ordered(jobs);
        write_atomic(&self.dir.join("results.json"), &serde_json::to_vec_pretty(&rows)?)?;
        write_atomic(&self.dir.join("results.csv"), &rows_to_csv(&rows)?)
    }
}

/// Runs every pending job of `plan`, persisting results as they complete.
/// Per-job failures become rows with an error string.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    run_experiment_with(plan, |_| {})
}

/// [`run_experiment`] with a callback invoked for every newly computed row.
pub fn run_experiment_with(
    plan: &ExperimentPlan,
    on_row: impl Fn(&ResultRow) + Sync,
) -> Result<ExperimentSummary> {
    plan.validate()?;
    let jobs = plan.jobs();
    let store = Mutex::new(Store::open(&plan.output_dir, plan.resume)?);
    let pending: Vec<Job> = {
        let s = store.lock().expect("store lock");
        jobs.iter().filter(|j| !s.rows.contains_key(&j.key())).cloned().collect()
    };
    let skipped = jobs.len() - pending.len();

    // Jobs sharing a mixture are grouped so the room is simulated once.
    let mut groups: Vec<Vec<Job>> = Vec::new();
    for job in &pending {
        match groups.last_mut() {
            Some(g)
                if g[0].condition == job.condition
                    && g[0].t60 == job.t60
                    && g[0].mixture_id == job.mixture_id =>
            {
                g.push(*job)
            }
            _ => groups.push(vec![*job]),
        }
    }

    for group in groups {
        let first = group[0];
        let spec = plan
            .conditions
            .iter()
            .find(|c| c.id == first.condition)
            .expect("job condition comes from the plan");
        let room = plan.room_for(spec, first.t60);
        let mixture = mixture_sources(plan, room.source_positions.len(), first.mixture_id)
            .and_then(|srcs| mix(&srcs, &room));
        group.par_iter().try_for_each(|job| -> Result<()> {
            let started = Instant::now();
            let (row, trace) = match &mixture {
                Ok(m) => match evaluate_job(plan, job, m) {
                    Ok((row, trace)) => (row, Some(trace)),
                    Err(e) => (ResultRow::failed(job, &e, started.elapsed().as_secs_f64()), None),
                },
                Err(e) => (ResultRow::failed(job, e, 0.0), None),
            };
            on_row(&row);
            store.lock().expect("store lock").insert(row, trace.as_ref(), &jobs)
        })?;
    }

    let rows = store.into_inner().expect("store lock").ordered(&jobs);
    Ok(ExperimentSummary { rows, computed: pending.len(), skipped })
}

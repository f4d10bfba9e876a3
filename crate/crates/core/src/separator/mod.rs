//! Determined separation: the optimal-transport regularized low-rank model
//! and the ILRMA and AuxIVA baselines, all sharing the same
//! iterative-projection demixing pass.

mod demix;

pub use demix::{
    apply_demixing, demixing_pass, ip_update, projection_back, weighted_covariance, DemixingSet,
    WeightedCovariance, COND_GUARD,
};

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmf::{init_nmf, NmfModel, PlanMarginals};
use crate::ot::{build_amplitude_weight, sinkhorn_row_sums, MarginalPair, OtConfig, Scalings};
use crate::stft::Spectrogram;

/// Frames whose total energy falls below this skip the transport solve.
pub const SILENT_FRAME_ENERGY: f64 = 1e-10;
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Wsilrma,
    Ilrma,
    Auxiva,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Wsilrma => "wsilrma",
            Backend::Ilrma => "ilrma",
            Backend::Auxiva => "auxiva",
        }
    }

    /// Whether `eta` influences this backend.
    pub fn uses_eta(self) -> bool {
        matches!(self, Backend::Wsilrma)
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wsilrma" => Ok(Backend::Wsilrma),
            "ilrma" => Ok(Backend::Ilrma),
            "auxiva" => Ok(Backend::Auxiva),
            other => Err(Error::InvalidArgument(format!("unknown backend '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparatorConfig {
    pub outer_iters: usize,
    pub ot: OtConfig,
    /// Bandwidth of the amplitude weight, in bins.
    pub eta: f64,
    /// NMF rank.
    pub rank: usize,
    pub seed: u64,
    pub backend: Backend,
    pub projection_back: bool,
    pub reference_channel: usize,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        Self {
            outer_iters: 100,
            ot: OtConfig::default(),
            eta: 30.0,
            rank: 10,
            seed: 0,
            backend: Backend::Wsilrma,
            projection_back: true,
            reference_channel: 0,
        }
    }
}

impl SeparatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 {
            return Err(Error::InvalidArgument("outer_iters must be >= 1".into()));
        }
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be >= 1".into()));
        }
        if self.backend.uses_eta() && !(self.eta > 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be > 0, got {}", self.eta)));
        }
        self.ot.validate()
    }
}

/// Per-iteration monitoring values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// Per-frame surrogate of the mutual-information objective:
    /// source-model negative log-likelihood minus `2 sum_f ln|det W(f)|`.
    pub objective: Vec<f64>,
    /// Fraction of transport solves that met tolerance (wsILRMA only).
    pub sinkhorn_converged: Vec<f64>,
    /// Mean inner iterations per transport solve (wsILRMA only).
    pub sinkhorn_iterations: Vec<f64>,
    /// Number of solves that needed log-domain stabilization.
    pub sinkhorn_stabilized: Vec<usize>,
}

impl ConvergenceTrace {
    /// Whether every transport solve of the final iteration converged.
    pub fn converged(&self) -> bool {
        self.sinkhorn_converged.last().map_or(true, |&c| c >= 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct SeparationOutput {
    pub y: Spectrogram,
    pub demixing: DemixingSet,
    pub trace: ConvergenceTrace,
}

/// Runs the configured backend.
pub fn separate(x: &Spectrogram, cfg: &SeparatorConfig) -> Result<SeparationOutput> {
    cfg.validate()?;
    let n = x.n_channels();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 channels, got {n}")));
    }
    if cfg.projection_back && cfg.reference_channel >= n {
        return Err(Error::InvalidArgument(format!(
            "reference channel {} out of range",
            cfg.reference_channel
        )));
    }
    let mut state = State::new(x, cfg)?;
    for it in 0..cfg.outer_iters {
        state.step(x, cfg).map_err(|e| match e {
            Error::NonFinite { .. } => e,
            other => Error::Iteration { iteration: it, source: Box::new(other) },
        })?;
        let last = *state.trace.objective.last().expect("objective recorded");
        if !last.is_finite() {
            return Err(Error::NonFinite {
                iteration: it,
                what: format!("objective = {last}"),
            });
        }
    }
    let mut y = apply_demixing(&state.w, x)?;
    if cfg.projection_back {
        y = projection_back(&y, x, cfg.reference_channel)?;
    }
    Ok(SeparationOutput { y, demixing: state.w, trace: state.trace })
}

/// AuxIVA with the spherical Laplace contrast.
pub fn separate_baseline_auxiva(x: &Spectrogram, cfg: &SeparatorConfig) -> Result<SeparationOutput> {
    separate(x, &SeparatorConfig { backend: Backend::Auxiva, ..cfg.clone() })
}

/// ILRMA with an Itakura-Saito NMF fit directly on `|y|^2`.
pub fn separate_baseline_ilrma(x: &Spectrogram, cfg: &SeparatorConfig) -> Result<SeparationOutput> {
    separate(x, &SeparatorConfig { backend: Backend::Ilrma, ..cfg.clone() })
}

struct State {
    w: DemixingSet,
    models: Vec<NmfModel>,
    weight: Option<crate::ot::AmplitudeWeight>,
    /// Warm starts for each `(source, frame)` transport solve.
    warm: Vec<Option<Scalings>>,
    trace: ConvergenceTrace,
}

struct FrameSolve {
    row_sums: Option<Vec<f64>>,
    iterations: usize,
    converged: bool,
    stabilized: bool,
    scalings: Option<Scalings>,
}

impl State {
    fn new(x: &Spectrogram, cfg: &SeparatorConfig) -> Result<Self> {
        let (n, f_bins, t_frames) = x.bins.dim();
        let models = match cfg.backend {
            Backend::Auxiva => Vec::new(),
            _ => (0..n)
                .map(|src| init_nmf(f_bins, t_frames, cfg.rank, cfg.seed.wrapping_add(src as u64)))
                .collect::<Result<_>>()?,
        };
        let weight = match cfg.backend {
            Backend::Wsilrma => Some(build_amplitude_weight(f_bins, cfg.eta)?),
            _ => None,
        };
        Ok(Self {
            w: DemixingSet::identity(n, f_bins),
            models,
            weight,
            warm: vec![None; n * t_frames],
            trace: ConvergenceTrace::default(),
        })
    }

    fn step(&mut self, x: &Spectrogram, cfg: &SeparatorConfig) -> Result<()> {
        let y = apply_demixing(&self.w, x)?;
        let power = y.power();
        let sigma2 = match cfg.backend {
            Backend::Wsilrma => self.transport_model_step(&power, cfg)?,
            Backend::Ilrma => {
                let mut out = Vec::with_capacity(self.models.len());
                for (n, model) in self.models.iter_mut().enumerate() {
                    let target = PlanMarginals::new(power.index_axis(Axis(0), n).to_owned())?;
                    model.update(&target)?;
                    out.push(model.variance());
                }
                out
            }
            Backend::Auxiva => spherical_variances(&power),
        };
        demixing_pass(&mut self.w, x, &sigma2)?;
        let y = apply_demixing(&self.w, x)?;
        self.trace.objective.push(surrogate(&y.power(), &sigma2, &self.w, cfg.backend));
        Ok(())
    }

    /// Transport solves for every `(source, frame)`, then one NMF sweep per
    /// source on the energy-scaled plan row sums.
    fn transport_model_step(
        &mut self,
        power: &Array3<f64>,
        cfg: &SeparatorConfig,
    ) -> Result<Vec<Array2<f64>>> {
        let (n_src, f_bins, t_frames) = power.dim();
        let weight = self.weight.as_ref().expect("transport backend has a weight");
        let variances: Vec<Array2<f64>> = self.models.iter().map(NmfModel::variance).collect();

        let solves: Vec<FrameSolve> = (0..n_src * t_frames)
            .into_par_iter()
            .map(|idx| {
                let (n, t) = (idx / t_frames, idx % t_frames);
                let pw: Vec<f64> = (0..f_bins).map(|f| power[[n, f, t]]).collect();
                let energy: f64 = pw.iter().sum();
                if !(energy >= SILENT_FRAME_ENERGY) {
                    return Ok(FrameSolve {
                        row_sums: None,
                        iterations: 0,
                        converged: true,
                        stabilized: false,
                        scalings: self.warm[idx].clone(),
                    });
                }
                let model: Vec<f64> = variances[n].column(t).to_vec();
                let m = MarginalPair::from_spectra(&pw, &model, cfg.ot.eps_floor)?;
                let plan = sinkhorn_row_sums(&m, weight, &cfg.ot, self.warm[idx].as_ref())?;
                let rows = plan.row_sums.mapv(|r| r * energy).to_vec();
                Ok(FrameSolve {
                    row_sums: Some(rows),
                    iterations: plan.iterations_run,
                    converged: plan.converged,
                    stabilized: plan.stabilized,
                    scalings: Some(plan.scalings),
                })
            })
            .collect::<Result<_>>()?;

        let total = solves.len().max(1) as f64;
        let solved: Vec<&FrameSolve> = solves.iter().filter(|s| s.row_sums.is_some()).collect();
        let denom = solved.len().max(1) as f64;
        self.trace
            .sinkhorn_converged
            .push(solves.iter().filter(|s| s.converged).count() as f64 / total);
        self.trace
            .sinkhorn_iterations
            .push(solved.iter().map(|s| s.iterations as f64).sum::<f64>() / denom);
        self.trace
            .sinkhorn_stabilized
            .push(solves.iter().filter(|s| s.stabilized).count());

        let mut out = Vec::with_capacity(n_src);
        for (n, model) in self.models.iter_mut().enumerate() {
            let mut p = variances[n].clone();
            for t in 0..t_frames {
                let solve = &solves[n * t_frames + t];
                if let Some(rows) = &solve.row_sums {
                    for f in 0..f_bins {
                        p[[f, t]] = rows[f];
                    }
                }
            }
            model.update(&PlanMarginals::new(p)?)?;
            out.push(model.variance());
        }
        for (slot, solve) in self.warm.iter_mut().zip(solves) {
            *slot = solve.scalings;
        }
        Ok(out)
    }
}

/// AuxIVA weights: every bin of a frame shares `r_t = ||y_n(:,t)||`.
fn spherical_variances(power: &Array3<f64>) -> Vec<Array2<f64>> {
    let (n_src, f_bins, t_frames) = power.dim();
    (0..n_src)
        .map(|n| {
            let r: Vec<f64> = (0..t_frames)
                .map(|t| (0..f_bins).map(|f| power[[n, f, t]]).sum::<f64>().sqrt().max(VARIANCE_FLOOR))
                .collect();
            Array2::from_shape_fn((f_bins, t_frames), |(_, t)| r[t])
        })
        .collect()
}

fn surrogate(power: &Array3<f64>, sigma2: &[Array2<f64>], w: &DemixingSet, backend: Backend) -> f64 {
    let (n_src, f_bins, t_frames) = power.dim();
    let mut nll = 0.0;
    for n in 0..n_src {
        match backend {
            Backend::Auxiva => {
                for t in 0..t_frames {
                    nll += (0..f_bins).map(|f| power[[n, f, t]]).sum::<f64>().sqrt();
                }
            }
            _ => {
                for f in 0..f_bins {
                    for t in 0..t_frames {
                        let s = sigma2[n][[f, t]];
                        nll += power[[n, f, t]] / s + s.ln();
                    }
                }
            }
        }
    }
    nll / t_frames as f64 - 2.0 * w.log_abs_det()
}

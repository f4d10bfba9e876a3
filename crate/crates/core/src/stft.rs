//! Short-time Fourier transform with weighted overlap-add resynthesis.
//!
//! Frames are reflect-padded by `frame_len / 2` at both ends so that every
//! input sample sits under a full set of overlapping windows. Only the
//! one-sided spectrum (`frame_len / 2 + 1` bins) is stored.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView1, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multichannel real-valued audio. Rows are channels.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSignal {
    samples: Array2<f64>,
    sample_rate: u32,
}

impl TimeSignal {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample_rate must be > 0".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Builds a signal from per-channel vectors, which must share a length.
    pub fn from_channels(channels: &[Vec<f64>], sample_rate: u32) -> Result<Self> {
        let n_ch = channels.len();
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::ShapeMismatch("channels differ in length".into()));
        }
        let mut samples = Array2::zeros((n_ch, len));
        for (mut row, ch) in samples.rows_mut().into_iter().zip(channels) {
            row.assign(&ArrayView1::from(ch.as_slice()));
        }
        Self::new(samples, sample_rate)
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::from_channels(&[samples], sample_rate)
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut Array2<f64> {
        &mut self.samples
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn channel(&self, ch: usize) -> ArrayView1<'_, f64> {
        self.samples.row(ch)
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Splits into one mono signal per channel.
    pub fn split_channels(&self) -> Vec<TimeSignal> {
        self.samples
            .rows()
            .into_iter()
            .map(|row| TimeSignal {
                samples: row.to_owned().insert_axis(Axis(0)),
                sample_rate: self.sample_rate,
            })
            .collect()
    }

    /// Stacks mono (or multichannel) signals along the channel axis.
    pub fn stack(signals: &[TimeSignal]) -> Result<TimeSignal> {
        let first = signals
            .first()
            .ok_or_else(|| Error::InvalidArgument("no signals to stack".into()))?;
        if signals
            .iter()
            .any(|s| s.len() != first.len() || s.sample_rate != first.sample_rate)
        {
            return Err(Error::ShapeMismatch(
                "stacked signals must share length and sample rate".into(),
            ));
        }
        let views: Vec<_> = signals.iter().map(|s| s.samples.view()).collect();
        let samples = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(TimeSignal { samples, sample_rate: first.sample_rate })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Hann analysis window with plain overlap-add synthesis.
    Hann,
    /// Square-root Hann for both analysis and synthesis.
    SqrtHann,
}

impl Window {
    fn hann(frame_len: usize) -> Vec<f64> {
        (0..frame_len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / frame_len as f64).cos())
            .collect()
    }

    pub fn analysis(self, frame_len: usize) -> Vec<f64> {
        match self {
            Window::Hann => Self::hann(frame_len),
            Window::SqrtHann => Self::hann(frame_len).into_iter().map(f64::sqrt).collect(),
        }
    }

    pub fn synthesis(self, frame_len: usize) -> Vec<f64> {
        match self {
            Window::Hann => vec![1.0; frame_len],
            Window::SqrtHann => Self::hann(frame_len).into_iter().map(f64::sqrt).collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "sqrt_hann" | "sqrt-hann" => Ok(Window::SqrtHann),
            other => Err(Error::InvalidArgument(format!("unknown window '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { frame_len: 1024, hop: 512, window: Window::SqrtHann }
    }
}

impl StftConfig {
    pub fn new(frame_len: usize, hop: usize, window: Window) -> Result<Self> {
        let cfg = Self { frame_len, hop, window };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || !self.frame_len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "frame_len must be a power of two >= 2, got {}",
                self.frame_len
            )));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidArgument(format!(
                "hop must satisfy 0 < hop <= frame_len, got {}",
                self.hop
            )));
        }
        if !self.is_cola() {
            return Err(Error::NotCola { frame_len: self.frame_len, hop: self.hop });
        }
        Ok(())
    }

    /// Whether the analysis/synthesis window product sums to a constant
    /// under shifts by `hop`.
    pub fn is_cola(&self) -> bool {
        let a = self.window.analysis(self.frame_len);
        let s = self.window.synthesis(self.frame_len);
        let prod: Vec<f64> = a.iter().zip(&s).map(|(x, y)| x * y).collect();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| prod.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        max > 0.0 && (max - min) <= 1e-9 * max
    }

    fn pad(&self) -> usize {
        self.frame_len / 2
    }

    fn n_frames(&self, len: usize) -> usize {
        1 + len.div_ceil(self.hop)
    }
}

/// Complex one-sided spectrogram indexed `(channel, frequency, frame)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub bins: Array3<Complex64>,
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
    pub sample_rate: u32,
    /// Length of the analyzed signal, when known.
    pub signal_len: Option<usize>,
}

impl Spectrogram {
    pub fn n_channels(&self) -> usize {
        self.bins.shape()[0]
    }

    pub fn n_bins(&self) -> usize {
        self.bins.shape()[1]
    }

    pub fn n_frames(&self) -> usize {
        self.bins.shape()[2]
    }

    pub fn config(&self) -> StftConfig {
        StftConfig { frame_len: self.frame_len, hop: self.hop, window: self.window }
    }

    /// Same metadata, new bins (shape must keep F and T).
    pub fn with_bins(&self, bins: Array3<Complex64>) -> Spectrogram {
        Spectrogram { bins, ..self.clone() }
    }

    pub fn scale(&self, c: Complex64) -> Spectrogram {
        self.with_bins(self.bins.mapv(|z| z * c))
    }

    /// `|X|^2` per `(channel, frequency, frame)`.
    pub fn power(&self) -> Array3<f64> {
        self.bins.mapv(|z| z.norm_sqr())
    }
}

fn plan(frame_len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(frame_len)
    } else {
        planner.plan_fft_forward(frame_len)
    }
}

fn reflect_pad(x: ArrayView1<'_, f64>, pad: usize, total: usize) -> Vec<f64> {
    let len = x.len();
    let mut out = vec![0.0; total];
    for (i, o) in out.iter_mut().enumerate() {
        let p = i as isize - pad as isize;
        let src = if p < 0 {
            Some((-p) as usize)
        } else if (p as usize) < len {
            Some(p as usize)
        } else {
            let over = p as usize - len;
            (over + 2 <= len && over < pad).then(|| len - 2 - over)
        };
        if let Some(s) = src {
            *o = x[s];
        }
    }
    out
}

/// Forward STFT of every channel of `signal`.
pub fn analyze(signal: &TimeSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let len = signal.len();
    if signal.n_channels() == 0 || len == 0 {
        return Err(Error::InvalidArgument("empty signal".into()));
    }
    if cfg.frame_len > len {
        return Err(Error::SignalTooShort { len, frame_len: cfg.frame_len });
    }
    let n = cfg.frame_len;
    let f_bins = cfg.n_bins();
    let t_frames = cfg.n_frames(len);
    let total = (t_frames - 1) * cfg.hop + n;
    let win = cfg.window.analysis(n);
    let fft = plan(n, false);

    let per_channel: Vec<Array2<Complex64>> = signal
        .samples()
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|row| {
            let padded = reflect_pad(row, cfg.pad(), total);
            let mut out = Array2::zeros((f_bins, t_frames));
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for t in 0..t_frames {
                let start = t * cfg.hop;
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(padded[start + k] * win[k], 0.0);
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for f in 0..f_bins {
                    out[[f, t]] = buf[f];
                }
            }
            out
        })
        .collect();

    let mut bins = Array3::zeros((signal.n_channels(), f_bins, t_frames));
    for (ch, block) in per_channel.into_iter().enumerate() {
        bins.index_axis_mut(Axis(0), ch).assign(&block);
    }
    Ok(Spectrogram {
        bins,
        frame_len: n,
        hop: cfg.hop,
        window: cfg.window,
        sample_rate: signal.sample_rate(),
        signal_len: Some(len),
    })
}

/// Inverse STFT by weighted overlap-add.
pub fn synthesize(spec: &Spectrogram, cfg: &StftConfig) -> Result<TimeSignal> {
    cfg.validate()?;
    if spec.config() != *cfg {
        return Err(Error::ConfigMismatch(format!(
            "spectrogram built with {:?}, synthesis requested with {:?}",
            spec.config(),
            cfg
        )));
    }
    let n = cfg.frame_len;
    if spec.n_bins() != cfg.n_bins() {
        return Err(Error::ConfigMismatch(format!(
            "expected {} bins, found {}",
            cfg.n_bins(),
            spec.n_bins()
        )));
    }
    let t_frames = spec.n_frames();
    let total = (t_frames - 1) * cfg.hop + n;
    let ana = cfg.window.analysis(n);
    let syn = cfg.window.synthesis(n);

    let mut norm = vec![0.0; total];
    for t in 0..t_frames {
        for k in 0..n {
            norm[t * cfg.hop + k] += ana[k] * syn[k];
        }
    }
    let norm_floor = 1e-10 * norm.iter().cloned().fold(0.0, f64::max);

    let pad = cfg.pad();
    let out_len = spec.signal_len.unwrap_or(total.saturating_sub(n));
    let ifft = plan(n, true);

    let rows: Vec<Vec<f64>> = (0..spec.n_channels())
        .into_par_iter()
        .map(|ch| {
            let mut acc = vec![0.0; total];
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
            for t in 0..t_frames {
                for f in 0..=n / 2 {
                    buf[f] = spec.bins[[ch, f, t]];
                }
                for f in 1..n / 2 {
                    buf[n - f] = spec.bins[[ch, f, t]].conj();
                }
                ifft.process_with_scratch(&mut buf, &mut scratch);
                let start = t * cfg.hop;
                for k in 0..n {
                    acc[start + k] += buf[k].re / n as f64 * syn[k];
                }
            }
            (0..out_len)
                .map(|i| {
                    let p = i + pad;
                    if p < total && norm[p] > norm_floor {
                        acc[p] / norm[p]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    TimeSignal::from_channels(&rows, spec.sample_rate)
}

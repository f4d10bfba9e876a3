//! Shoebox image-source room simulation and convolutive mixing.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::TimeSignal;

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Sabine's constant in s/m.
pub const SABINE: f64 = 0.161;
pub const MIX_PEAK: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// (L, W, H) in meters.
    pub dimensions: [f64; 3],
    pub t60: f64,
    pub mic_positions: Vec<[f64; 3]>,
    pub source_positions: Vec<[f64; 3]>,
    pub sample_rate: u32,
    /// Maximum number of wall bounces; `None` keeps every image that
    /// arrives before the `1.2 * t60` truncation.
    #[serde(default)]
    pub max_order: Option<usize>,
}

/// Array geometry of the two benchmark conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Sources at 10° and 20° from broadside.
    Near,
    /// Sources at 45° and 55° from broadside.
    Wide,
}

impl Condition {
    pub fn angles_deg(self) -> [f64; 2] {
        match self {
            Condition::Near => [10.0, 20.0],
            Condition::Wide => [45.0, 55.0],
        }
    }

    pub fn index(self) -> usize {
        match self {
            Condition::Near => 1,
            Condition::Wide => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Condition::Near),
            2 => Ok(Condition::Wide),
            _ => Err(Error::InvalidArgument(format!("condition must be 1 or 2, got {i}"))),
        }
    }

    /// 8×8×3 m room, two mics 6 cm apart centred at 1.5 m height, sources
    /// 2 m from the array centre.
    pub fn room(self, t60: f64, sample_rate: u32) -> RoomSpec {
        let dims = [8.0, 8.0, 3.0];
        let centre = [4.0, 4.0, 1.5];
        let half = 0.03;
        let mics = vec![
            [centre[0] - half, centre[1], centre[2]],
            [centre[0] + half, centre[1], centre[2]],
        ];
        let sources = self
            .angles_deg()
            .iter()
            .map(|deg| {
                let th = deg.to_radians();
                [centre[0] + 2.0 * th.sin(), centre[1] + 2.0 * th.cos(), centre[2]]
            })
            .collect();
        RoomSpec {
            dimensions: dims,
            t60,
            mic_positions: mics,
            source_positions: sources,
            sample_rate,
            max_order: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Absorption {
    /// No reflections are simulated.
    Anechoic,
    Coefficient(f64),
}

impl RoomSpec {
    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [l, w, h] = self.dimensions;
        2.0 * (l * w + l * h + w * h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Geometry(format!("bad room dimensions {:?}", self.dimensions)));
        }
        if !(self.t60.is_finite() && self.t60 >= 0.0) {
            return Err(Error::Geometry(format!("t60 must be >= 0, got {}", self.t60)));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample_rate must be > 0".into()));
        }
        if self.mic_positions.is_empty() || self.mic_positions.len() != self.source_positions.len() {
            return Err(Error::Geometry(format!(
                "{} mics for {} sources (determined case needs equal counts)",
                self.mic_positions.len(),
                self.source_positions.len()
            )));
        }
        for (what, p) in self
            .mic_positions
            .iter()
            .map(|p| ("mic", p))
            .chain(self.source_positions.iter().map(|p| ("source", p)))
        {
            let inside = p.iter().zip(&self.dimensions).all(|(x, d)| *x > 0.0 && *x < *d);
            if !inside {
                return Err(Error::Geometry(format!("{what} at {p:?} is not strictly inside the room")));
            }
        }
        Ok(())
    }
}

/// Sabine wall absorption `0.161 V / (S T60)` clamped to `(0, 1]`.
pub fn sabine_absorption(room: &RoomSpec) -> Absorption {
    if room.t60 <= 0.0 {
        return Absorption::Anechoic;
    }
    let alpha = SABINE * room.volume() / (room.surface() * room.t60);
    Absorption::Coefficient(alpha.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Reverberation time predicted by Sabine for absorption `alpha`.
pub fn sabine_t60(dimensions: [f64; 3], alpha: f64) -> f64 {
    let [l, w, h] = dimensions;
    SABINE * l * w * h / (2.0 * (l * w + l * h + w * h) * alpha)
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Half-width in samples of the windowed-sinc fractional delay.
fn sinc_half_width(sample_rate: u32) -> usize {
    ((0.004 * sample_rate as f64).round() as usize).max(1)
}

/// Adds `gain * δ(n - delay)` band-limited by a Hann-windowed sinc.
fn add_fractional_impulse(h: &mut [f64], delay: f64, gain: f64, half: usize) {
    let centre = delay.round();
    if (delay - centre).abs() < 1e-12 {
        if let Some(v) = h.get_mut(centre as usize) {
            *v += gain;
        }
        return;
    }
    let first = (delay.floor() as isize - half as isize + 1).max(0);
    let last = ((delay.floor() as isize) + half as isize).min(h.len() as isize - 1);
    if first > last {
        return;
    }
    // sin(π x) alternates sign across integer steps; the window's cosine
    // advances by a fixed rotation.
    let x0 = first as f64 - delay;
    let mut s = (PI * x0).sin();
    let step = Complex64::from_polar(1.0, PI / half as f64);
    let mut rot = Complex64::from_polar(1.0, PI * x0 / half as f64);
    for n in first..=last {
        let x = n as f64 - delay;
        let win = 0.5 * (1.0 + rot.re);
        h[n as usize] += gain * win * s / (PI * x);
        s = -s;
        rot *= step;
    }
}

/// Impulse response from source `src` to mic `mic`.
///
/// Each wall bounce scales the amplitude by `sqrt(1 - α)` (energy
/// reflection `1 - α`), on top of `1/d` spreading.
pub fn generate_rir(room: &RoomSpec, src: usize, mic: usize) -> Result<TimeSignal> {
    room.validate()?;
    let s = *room
        .source_positions
        .get(src)
        .ok_or_else(|| Error::InvalidArgument(format!("no source {src}")))?;
    let m = *room
        .mic_positions
        .get(mic)
        .ok_or_else(|| Error::InvalidArgument(format!("no mic {mic}")))?;
    let direct = dist(&s, &m);
    if direct < 1e-6 {
        return Err(Error::Geometry(format!("source {src} coincides with mic {mic}")));
    }
    let fs = room.sample_rate as f64;
    let half = sinc_half_width(room.sample_rate);
    let samples_per_meter = fs / SPEED_OF_SOUND;
    let direct_delay = direct * samples_per_meter;

    let (reflection, len) = match sabine_absorption(room) {
        Absorption::Anechoic => (None, direct_delay.ceil() as usize + half + 1),
        Absorption::Coefficient(alpha) => {
            let n = (1.2 * room.t60 * fs).ceil() as usize;
            (Some((1.0 - alpha).sqrt()), n.max(direct_delay.ceil() as usize + half + 1))
        }
    };
    let mut h = vec![0.0; len];
    let Some(beta) = reflection else {
        add_fractional_impulse(&mut h, direct_delay, 1.0 / direct, half);
        return TimeSignal::mono(h, room.sample_rate);
    };

    let max_dist = len as f64 / samples_per_meter;
    let dims = room.dimensions;
    let reach: Vec<i64> = dims.iter().map(|d| (max_dist / (2.0 * d)).ceil() as i64 + 1).collect();
    let max_order = room.max_order.unwrap_or(usize::MAX);
    let beta_pow: Vec<f64> = {
        let top = (2 * reach.iter().sum::<i64>() + 3) as usize;
        std::iter::successors(Some(1.0), |p| Some(p * beta)).take(top + 1).collect()
    };

    // Image positions: (1 - 2q) s + 2 m L for parity q ∈ {0,1}, lattice m;
    // the image undergoes |m - q| + |m| bounces per axis.
    for parity in 0..8u32 {
        let q = [(parity & 1) as i64, ((parity >> 1) & 1) as i64, ((parity >> 2) & 1) as i64];
        for mx in -reach[0]..=reach[0] {
            let dx = (1 - 2 * q[0]) as f64 * s[0] + 2.0 * mx as f64 * dims[0] - m[0];
            let bx = (mx - q[0]).abs() + mx.abs();
            if dx.abs() > max_dist {
                continue;
            }
            for my in -reach[1]..=reach[1] {
                let dy = (1 - 2 * q[1]) as f64 * s[1] + 2.0 * my as f64 * dims[1] - m[1];
                let by = (my - q[1]).abs() + my.abs();
                if dx.hypot(dy) > max_dist {
                    continue;
                }
                for mz in -reach[2]..=reach[2] {
                    let dz = (1 - 2 * q[2]) as f64 * s[2] + 2.0 * mz as f64 * dims[2] - m[2];
                    let bounces = (bx + by + (mz - q[2]).abs() + mz.abs()) as usize;
                    if bounces > max_order {
                        continue;
                    }
                    let d = (dx * dx + dy * dy + dz * dz).sqrt();
                    let delay = d * samples_per_meter;
                    if delay >= (len - 1) as f64 {
                        continue;
                    }
                    add_fractional_impulse(&mut h, delay, beta_pow[bounces] / d, half);
                }
            }
        }
    }
    TimeSignal::mono(h, room.sample_rate)
}

/// Linear convolution of `x` with `h`, truncated to `x.len()` samples.
pub fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let nfft = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);
    let to_buf = |v: &[f64]| {
        let mut b = vec![Complex64::new(0.0, 0.0); nfft];
        b.iter_mut().zip(v).for_each(|(b, &v)| b.re = v);
        b
    };
    let mut a = to_buf(x);
    let mut b = to_buf(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(a, b)| *a *= b);
    inv.process(&mut a);
    a.iter().take(x.len()).map(|z| z.re / nfft as f64).collect()
}

/// A convolutive mixture together with each source's image at the mics,
/// all sharing the same peak-normalization gain.
#[derive(Clone, Debug)]
pub struct Mixture {
    pub mixture: TimeSignal,
    /// `images[n]` has one channel per mic.
    pub images: Vec<TimeSignal>,
    pub gain: f64,
}

impl Mixture {
    /// Images of all sources at `mic`, one channel per source.
    pub fn images_at(&self, mic: usize) -> Result<TimeSignal> {
        let rows: Vec<Vec<f64>> = self.images.iter().map(|im| im.channel(mic).to_vec()).collect();
        TimeSignal::from_channels(&rows, self.mixture.sample_rate())
    }
}

/// Mixes mono `sources` through `rirs[n][m]` (source `n` to mic `m`),
/// normalizing the mixture peak to 0.9.
pub fn mix_with_rirs(sources: &[TimeSignal], rirs: &[Vec<Vec<f64>>]) -> Result<Mixture> {
    let first = sources.first().ok_or_else(|| Error::InvalidArgument("no sources".into()))?;
    let len = first.len();
    let fs = first.sample_rate();
    if sources.iter().any(|s| s.len() != len || s.n_channels() != 1 || s.sample_rate() != fs) {
        return Err(Error::ShapeMismatch("sources must be mono, equal length and rate".into()));
    }
    if rirs.len() != sources.len() {
        return Err(Error::ShapeMismatch(format!("{} rir sets for {} sources", rirs.len(), sources.len())));
    }
    let n_mics = rirs[0].len();
    if n_mics == 0 || rirs.iter().any(|r| r.len() != n_mics) {
        return Err(Error::ShapeMismatch("every source needs one rir per mic".into()));
    }
    let mut images: Vec<Array2<f64>> = Vec::with_capacity(sources.len());
    for (src, hs) in sources.iter().zip(rirs) {
        let x = src.channel(0).to_vec();
        let mut img = Array2::zeros((n_mics, len));
        for (m, h) in hs.iter().enumerate() {
            let y = convolve_truncated(&x, h);
            img.row_mut(m).iter_mut().zip(y).for_each(|(o, v)| *o = v);
        }
        images.push(img);
    }
    let mut mixture = Array2::<f64>::zeros((n_mics, len));
    for img in &images {
        mixture += img;
    }
    let peak = mixture.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let gain = if peak > 0.0 { MIX_PEAK / peak } else { 1.0 };
    mixture.mapv_inplace(|v| v * gain);
    let images = images
        .into_iter()
        .map(|im| TimeSignal::new(im.mapv(|v| v * gain), fs))
        .collect::<Result<Vec<_>>>()?;
    Ok(Mixture { mixture: TimeSignal::new(mixture, fs)?, images, gain })
}

/// Simulates every source-to-mic response in `room` and mixes `sources`.
pub fn mix(sources: &[TimeSignal], room: &RoomSpec) -> Result<Mixture> {
    room.validate()?;
    if sources.len() != room.source_positions.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} signals for {} source positions",
            sources.len(),
            room.source_positions.len()
        )));
    }
    if sources.iter().any(|s| s.sample_rate() != room.sample_rate) {
        return Err(Error::ConfigMismatch("source sample rate differs from room".into()));
    }
    let rirs = (0..sources.len())
        .map(|n| {
            (0..room.mic_positions.len())
                .map(|m| generate_rir(room, n, m).map(|h| h.channel(0).to_vec()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    mix_with_rirs(sources, &rirs)
}

/// Backward-integrated energy decay of `h` in dB, normalized to 0 at `t = 0`.
pub fn schroeder_decay_db(h: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = h
        .iter()
        .rev()
        .map(|v| {
            acc += v * v;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|e| 10.0 * (e / total).max(1e-300).log10()).collect()
}

/// First time (s) at which the decay curve reaches `level_db`.
pub fn decay_time(h: &[f64], sample_rate: u32, level_db: f64) -> Option<f64> {
    schroeder_decay_db(h)
        .iter()
        .position(|&v| v <= level_db)
        .map(|i| i as f64 / sample_rate as f64)
}

/// T60 extrapolated from a line fit of the decay between −5 and −35 dB.
pub fn t30_estimate(h: &[f64], sample_rate: u32) -> Option<f64> {
    let edc = schroeder_decay_db(h);
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .filter(|(_, v)| (-35.0..=-5.0).contains(*v))
        .map(|(i, &v)| (i as f64 / sample_rate as f64, v))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, mv) = pts.iter().fold((0.0, 0.0), |(a, b), (t, v)| (a + t / n, b + v / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, v)| (a + (t - mt) * (v - mv), b + (t - mt).powi(2)));
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_field(src: [f64; 3], mic: [f64; 3], fs: u32) -> RoomSpec {
        RoomSpec {
            dimensions: [20.0, 20.0, 20.0],
            t60: 0.0,
            mic_positions: vec![mic],
            source_positions: vec![src],
            sample_rate: fs,
            max_order: None,
        }
    }

    #[test]
    fn sabine_values() {
        let room = Condition::Near.room(0.4, 16000);
        assert_eq!(room.volume(), 192.0);
        assert_eq!(room.surface(), 224.0);
        let Absorption::Coefficient(a) = sabine_absorption(&room) else { panic!() };
        assert!((a - 0.161 * 192.0 / (224.0 * 0.4)).abs() < 1e-15);
        assert!((a - 0.345).abs() < 1e-3);
        assert!((sabine_t60(room.dimensions, a) - 0.4).abs() < 1e-9);
        let long = RoomSpec { t60: 1e9, ..room.clone() };
        let Absorption::Coefficient(small) = sabine_absorption(&long) else { panic!() };
        assert!(small > 0.0 && small < 1e-9);
        assert_eq!(sabine_absorption(&RoomSpec { t60: 0.0, ..room }), Absorption::Anechoic);
    }

    #[test]
    fn anechoic_direct_path() {
        // 3.43 m at 1 kHz is exactly 10 samples.
        let room = free_field([5.0, 5.0, 5.0], [8.43, 5.0, 5.0], 1000);
        let h = generate_rir(&room, 0, 0).unwrap();
        let h = h.channel(0);
        for (i, &v) in h.iter().enumerate() {
            let want = if i == 10 { 1.0 / 3.43 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "{i}: {v}");
        }
    }

    #[test]
    fn spreading_halves_amplitude() {
        let fs = 1000;
        let near = free_field([5.0, 5.0, 5.0], [8.43, 5.0, 5.0], fs);
        let far = free_field([5.0, 5.0, 5.0], [11.86, 5.0, 5.0], fs);
        let a = generate_rir(&near, 0, 0).unwrap().channel(0)[10];
        let b = generate_rir(&far, 0, 0).unwrap().channel(0)[20];
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_delay_preserves_low_frequency_gain() {
        let room = free_field([5.0, 5.0, 5.0], [8.0, 5.0, 5.0], 16000);
        let h = generate_rir(&room, 0, 0).unwrap();
        let dc: f64 = h.channel(0).sum();
        assert!((dc * 3.0 - 1.0).abs() < 0.02, "{dc}");
    }

    #[test]
    fn geometry_errors() {
        let mut room = Condition::Near.room(0.2, 8000);
        room.source_positions[0] = room.mic_positions[0];
        assert!(matches!(generate_rir(&room, 0, 0), Err(Error::Geometry(_))));
        let mut room = Condition::Near.room(0.2, 8000);
        room.mic_positions[1][2] = 3.0;
        assert!(room.validate().is_err());
        let mut room = Condition::Near.room(0.2, 8000);
        room.source_positions.pop();
        assert!(room.validate().is_err());
        assert!(RoomSpec { t60: -1.0, ..Condition::Wide.room(0.2, 8000) }.validate().is_err());
    }

    #[test]
    fn unit_delay_mixture_is_delayed_sum() {
        let a = TimeSignal::mono(vec![1.0, 2.0, 3.0, 4.0], 8).unwrap();
        let b = TimeSignal::mono(vec![0.5, -1.0, 0.0, 2.0], 8).unwrap();
        let d = vec![0.0, 1.0];
        let id = vec![1.0];
        let m = mix_with_rirs(&[a, b], &[vec![id.clone(), d.clone()], vec![d, id]]).unwrap();
        let raw = [[1.0, 2.5, 2.0, 4.0], [0.5, 0.0, 2.0, 5.0]];
        let g = 0.9 / 5.0;
        for c in 0..2 {
            for i in 0..4 {
                assert!((m.mixture.samples()[[c, i]] - g * raw[c][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn silent_source_leaves_other_image() {
        let room = Condition::Wide.room(0.2, 8000);
        let x: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let srcs = [TimeSignal::mono(x, 8000).unwrap(), TimeSignal::mono(vec![0.0; 4000], 8000).unwrap()];
        let m = mix(&srcs, &room).unwrap();
        let diff = (m.mixture.samples() - m.images[0].samples()).mapv(f64::abs);
        assert!(diff.iter().all(|&v| v < 1e-12));
        let peak = m.mixture.samples().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((peak - 0.9).abs() < 1e-12);
    }

    #[test]
    fn max_order_zero_is_direct_path_only() {
        let mut room = Condition::Near.room(0.3, 8000);
        room.max_order = Some(0);
        let h = generate_rir(&room, 0, 0).unwrap();
        let anechoic = generate_rir(&RoomSpec { t60: 0.0, ..room.clone() }, 0, 0).unwrap();
        let n = anechoic.len();
        let hv = h.channel(0);
        for i in 0..hv.len() {
            let want = if i < n { anechoic.channel(0)[i] } else { 0.0 };
            assert!((hv[i] - want).abs() < 1e-12);
        }
    }
}

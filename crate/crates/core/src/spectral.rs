//! Inter-band correlation diagnostics.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::Spectrogram;

/// Pairwise normalized correlation between frequency bins of one channel.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    pub r: Array2<Complex64>,
    /// `true` for bins with zero energy; their diagonal entry is undefined
    /// and stored as zero.
    pub undefined: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn n_bins(&self) -> usize {
        self.r.nrows()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.r.mapv(|z| z.norm())
    }

    /// Mean of `|r(f, f + offset)|` over bins with defined energy.
    pub fn mean_offset_magnitude(&self, offset: usize) -> f64 {
        let n = self.n_bins();
        let vals: Vec<f64> = (0..n.saturating_sub(offset))
            .filter(|&f| !self.undefined[f] && !self.undefined[f + offset])
            .map(|f| self.r[[f, f + offset]].norm())
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }
}

/// `r(f1,f2) = mean_t[x(f1,t) conj(x(f2,t))] / (rms(f1) rms(f2))`.
pub fn interband_correlation(spec: &Spectrogram, channel: usize) -> Result<CorrelationMatrix> {
    if channel >= spec.n_channels() {
        return Err(Error::InvalidArgument(format!(
            "channel {channel} out of range ({} channels)",
            spec.n_channels()
        )));
    }
    let t_frames = spec.n_frames();
    if t_frames < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: t_frames });
    }
    let x = spec.bins.index_axis(ndarray::Axis(0), channel);
    let f_bins = x.nrows();
    let inv_t = 1.0 / t_frames as f64;

    let rms: Vec<f64> = (0..f_bins)
        .map(|f| (x.row(f).iter().map(|z| z.norm_sqr()).sum::<f64>() * inv_t).sqrt())
        .collect();
    let undefined: Vec<bool> = rms.iter().map(|&e| e == 0.0).collect();

    let mut r = Array2::zeros((f_bins, f_bins));
    for f1 in 0..f_bins {
        if undefined[f1] {
            continue;
        }
        r[[f1, f1]] = Complex64::new(1.0, 0.0);
        for f2 in f1 + 1..f_bins {
            if undefined[f2] {
                continue;
            }
            let cross: Complex64 = x
                .row(f1)
                .iter()
                .zip(x.row(f2).iter())
                .map(|(a, b)| a * b.conj())
                .sum();
            let v = cross * inv_t / (rms[f1] * rms[f2]);
            r[[f1, f2]] = v;
            r[[f2, f1]] = v.conj();
        }
    }
    Ok(CorrelationMatrix { r, undefined })
}

/// Writes `|r|` as a plain CSV grid (row-major, one row per line).
pub fn export_correlation(corr: &CorrelationMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    for row in corr.magnitude().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads back a grid written by [`export_correlation`].
pub fn import_correlation(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad value '{v}': {e}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::ShapeMismatch("ragged correlation csv".into()));
    }
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::{analyze, StftConfig, TimeSignal, Window};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn white(len: usize, seed: u64) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = StftConfig::new(128, 64, Window::Hann).unwrap();
        analyze(&TimeSignal::mono(x, 8000).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn diagonal_is_one_and_hermitian() {
        let corr = interband_correlation(&white(4000, 1), 0).unwrap();
        for f in 0..corr.n_bins() {
            assert!((corr.r[[f, f]].re - 1.0).abs() < 1e-12);
            for g in 0..corr.n_bins() {
                assert!((corr.r[[f, g]] - corr.r[[g, f]].conj()).norm() < 1e-12);
                assert!(corr.r[[f, g]].norm() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn single_frame_is_rejected() {
        let bins = Array3::from_elem((1, 4, 1), Complex64::new(1.0, 0.0));
        let spec = Spectrogram {
            bins,
            frame_len: 8,
            hop: 4,
            window: Window::Hann,
            sample_rate: 8000,
            signal_len: None,
        };
        assert!(matches!(
            interband_correlation(&spec, 0),
            Err(Error::InsufficientFrames { .. })
        ));
    }

    #[test]
    fn zero_energy_bin_is_flagged() {
        let mut bins = Array3::from_elem((1, 3, 4), Complex64::new(1.0, 0.5));
        for t in 0..4 {
            bins[[0, 1, t]] = Complex64::new(0.0, 0.0);
        }
        let spec = Spectrogram {
            bins,
            frame_len: 4,
            hop: 2,
            window: Window::Hann,
            sample_rate: 8000,
            signal_len: None,
        };
        let corr = interband_correlation(&spec, 0).unwrap();
        assert_eq!(corr.undefined, vec![false, true, false]);
        assert_eq!(corr.r[[0, 1]].norm(), 0.0);
        assert_eq!(corr.r[[1, 1]].norm(), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corr.csv");
        let corr = interband_correlation(&white(3000, 2), 0).unwrap();
        export_correlation(&corr, &path).unwrap();
        let back = import_correlation(&path).unwrap();
        let mag = corr.magnitude();
        assert_eq!(back.dim(), mag.dim());
        for (a, b) in back.iter().zip(mag.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_export_has_unit_diagonal() {
        let mut r = Array2::zeros((3, 3));
        for f in 0..3 {
            r[[f, f]] = Complex64::new(1.0, 0.0);
        }
        let corr = CorrelationMatrix { r, undefined: vec![false; 3] };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("id.csv");
        export_correlation(&corr, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "1,0,0");
        assert_eq!(lines[1], "0,1,0");
        assert_eq!(lines[2].split(',').count(), 3);
    }
}

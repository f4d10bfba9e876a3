//! Per-frequency demixing matrices and the iterative-projection update.

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stft::Spectrogram;

/// Condition number of `W(f)` above which the IP solve is regularized.
pub const COND_GUARD: f64 = 1e12;

/// Demixing matrices `W(f)`, one `N x N` per frequency.
///
/// Row `n` of `W(f)` holds `w_n(f)^H`, so `y_n(f,t) = w_n(f)^H x(f,t)` and
/// `y(f,t) = W(f) x(f,t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DemixingSet {
    pub w: Vec<DMatrix<Complex64>>,
}

impl DemixingSet {
    pub fn identity(n_sources: usize, n_bins: usize) -> Self {
        Self { w: vec![DMatrix::identity(n_sources, n_sources); n_bins] }
    }

    pub fn n_sources(&self) -> usize {
        self.w.first().map_or(0, |m| m.nrows())
    }

    pub fn n_bins(&self) -> usize {
        self.w.len()
    }

    /// The filter `w_n(f)` (a column vector).
    pub fn filter(&self, n: usize, f: usize) -> Vec<Complex64> {
        self.w[f].row(n).iter().map(|z| z.conj()).collect()
    }

    /// `sum_f ln |det W(f)|`.
    pub fn log_abs_det(&self) -> f64 {
        self.w.iter().map(|m| m.clone().lu().determinant().norm().ln()).sum()
    }
}

/// Weighted spatial covariance `O_{n,f}` (Hermitian, PSD).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedCovariance {
    pub o: DMatrix<Complex64>,
}

impl WeightedCovariance {
    pub fn max_hermitian_error(&self) -> f64 {
        let d = &self.o - self.o.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Adds `scale * trace / N` to the diagonal.
    pub fn regularized(&self, scale: f64) -> Self {
        let n = self.o.nrows();
        let tr = self.o.trace().re / n as f64;
        let bump = if tr > 0.0 { scale * tr } else { scale };
        let mut o = self.o.clone();
        for i in 0..n {
            o[(i, i)] += Complex64::new(bump, 0.0);
        }
        Self { o }
    }
}

/// `y(f,t) = W(f) x(f,t)` for every bin and frame.
pub fn apply_demixing(w: &DemixingSet, x: &Spectrogram) -> Result<Spectrogram> {
    let (n_ch, f_bins, t_frames) = x.bins.dim();
    if w.n_bins() != f_bins || w.n_sources() != n_ch {
        return Err(Error::ShapeMismatch(format!(
            "demixing set is {}x{} over {} bins, spectrogram has {} channels and {} bins",
            w.n_sources(),
            w.n_sources(),
            w.n_bins(),
            n_ch,
            f_bins
        )));
    }
    let mut y = Array3::zeros((n_ch, f_bins, t_frames));
    for f in 0..f_bins {
        let wf = &w.w[f];
        for t in 0..t_frames {
            for n in 0..n_ch {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..n_ch {
                    acc += wf[(n, m)] * x.bins[[m, f, t]];
                }
                y[[n, f, t]] = acc;
            }
        }
    }
    Ok(x.with_bins(y))
}

/// `O = (1/T) sum_t x(f,t) x(f,t)^H / sigma2[f,t]` for one source's
/// variance matrix `sigma2` (F x T).
pub fn weighted_covariance(
    x: &Spectrogram,
    sigma2: ArrayView2<'_, f64>,
    f: usize,
) -> Result<WeightedCovariance> {
    let (n_ch, f_bins, t_frames) = x.bins.dim();
    if sigma2.dim() != (f_bins, t_frames) || f >= f_bins {
        return Err(Error::ShapeMismatch(format!(
            "variance {:?} vs spectrogram ({f_bins}, {t_frames}) at bin {f}",
            sigma2.dim()
        )));
    }
    let mut o = DMatrix::<Complex64>::zeros(n_ch, n_ch);
    for t in 0..t_frames {
        let s = sigma2[[f, t]];
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "variance must be positive, got {s} at ({f}, {t})"
            )));
        }
        let inv = 1.0 / s;
        for i in 0..n_ch {
            let xi = x.bins[[i, f, t]] * inv;
            for j in 0..n_ch {
                o[(i, j)] += xi * x.bins[[j, f, t]].conj();
            }
        }
    }
    o /= Complex64::new(t_frames as f64, 0.0);
    Ok(WeightedCovariance { o })
}

fn condition_number(m: &DMatrix<Complex64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Iterative-projection update of `w_n(f)`:
/// `w <- (W O)^{-1} e_n`, then `w <- w / sqrt(w^H O w)`.
pub fn ip_update(w: &mut DemixingSet, o: &WeightedCovariance, n: usize, f: usize) -> Result<()> {
    let wf = &w.w[f];
    let n_src = wf.nrows();
    if n >= n_src || o.o.nrows() != n_src {
        return Err(Error::ShapeMismatch(format!(
            "source {n} / covariance {}x{} vs demixing {n_src}x{n_src}",
            o.o.nrows(),
            o.o.ncols()
        )));
    }
    let mut m = wf * &o.o;
    if condition_number(wf) > COND_GUARD {
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        for i in 0..n_src {
            m[(i, i)] += Complex64::new(1e-8 * scale, 0.0);
        }
    }
    let mut e = nalgebra::DVector::<Complex64>::zeros(n_src);
    e[n] = Complex64::new(1.0, 0.0);
    let sol = m
        .lu()
        .solve(&e)
        .filter(|s| s.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .ok_or(Error::Singular { source_index: n, freq: f })?;
    let quad = (sol.adjoint() * &o.o * &sol)[(0, 0)].re;
    if !(quad > 0.0) || !quad.is_finite() {
        return Err(Error::Singular { source_index: n, freq: f });
    }
    let sol = sol / Complex64::new(quad.sqrt(), 0.0);
    for j in 0..n_src {
        w.w[f][(n, j)] = sol[j].conj();
    }
    Ok(())
}

/// Updates every `w_n(f)` once, sources in order, frequencies in parallel.
/// `sigma2[n]` is the F x T variance of source `n`.
pub fn demixing_pass(w: &mut DemixingSet, x: &Spectrogram, sigma2: &[Array2<f64>]) -> Result<()> {
    let n_src = w.n_sources();
    if sigma2.len() != n_src {
        return Err(Error::ShapeMismatch(format!(
            "{} variance matrices for {n_src} sources",
            sigma2.len()
        )));
    }
    w.w.par_iter_mut()
        .enumerate()
        .try_for_each(|(f, wf)| -> Result<()> {
            let mut local = DemixingSet { w: vec![wf.clone()] };
            for (n, s2) in sigma2.iter().enumerate() {
                let o = weighted_covariance(x, s2.view(), f)?;
                let res = ip_update(&mut local, &o, n, 0);
                if let Err(Error::Singular { .. }) = res {
                    ip_update(&mut local, &o.regularized(1e-10), n, 0)
                        .map_err(|_| Error::Singular { source_index: n, freq: f })?;
                } else {
                    res?;
                }
            }
            *wf = local.w.pop().expect("one matrix");
            Ok(())
        })
}

/// Rescales each output per frequency by the least-squares gain that best
/// reconstructs the reference channel of the mixture from it.
pub fn projection_back(y: &Spectrogram, x: &Spectrogram, reference: usize) -> Result<Spectrogram> {
    if reference >= x.n_channels() || y.bins.dim().1 != x.bins.dim().1 {
        return Err(Error::InvalidArgument(format!(
            "reference channel {reference} invalid for {} channels",
            x.n_channels()
        )));
    }
    let (n_src, f_bins, t_frames) = y.bins.dim();
    let mut out = y.bins.clone();
    for n in 0..n_src {
        for f in 0..f_bins {
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = 0.0;
            for t in 0..t_frames {
                let yv = y.bins[[n, f, t]];
                num += x.bins[[reference, f, t]] * yv.conj();
                den += yv.norm_sqr();
            }
            let c = if den > 0.0 { num / den } else { Complex64::new(0.0, 0.0) };
            for t in 0..t_frames {
                out[[n, f, t]] *= c;
            }
        }
    }
    Ok(y.with_bins(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::Window;
    use ndarray::Array3;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spec(bins: Array3<Complex64>) -> Spectrogram {
        Spectrogram {
            bins,
            frame_len: 8,
            hop: 4,
            window: Window::SqrtHann,
            sample_rate: 8000,
            signal_len: None,
        }
    }

    #[test]
    fn identity_and_permutation_demixing() {
        let bins = Array3::from_shape_fn((2, 3, 4), |(n, f, t)| c(n as f64 + f as f64, t as f64));
        let x = spec(bins);
        let y = apply_demixing(&DemixingSet::identity(2, 3), &x).unwrap();
        assert_eq!(y.bins, x.bins);

        let perm = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let w = DemixingSet { w: vec![perm; 3] };
        let y = apply_demixing(&w, &x).unwrap();
        for f in 0..3 {
            for t in 0..4 {
                assert_eq!(y.bins[[0, f, t]], x.bins[[1, f, t]]);
                assert_eq!(y.bins[[1, f, t]], x.bins[[0, f, t]]);
            }
        }
    }

    #[test]
    fn covariance_basic_cases() {
        let mut bins = Array3::zeros((2, 1, 1));
        bins[[0, 0, 0]] = c(1.0, 0.0);
        let x = spec(bins);
        let o = weighted_covariance(&x, Array2::from_elem((1, 1), 4.0).view(), 0).unwrap();
        assert_eq!(o.o[(0, 0)], c(0.25, 0.0));
        assert_eq!(o.o[(1, 1)], c(0.0, 0.0));

        let bins = Array3::from_shape_fn((2, 2, 5), |(n, f, t)| {
            c((n + 1) as f64 * (t as f64).sin(), f as f64 + (t * n) as f64 * 0.3)
        });
        let x = spec(bins);
        let one = weighted_covariance(&x, Array2::ones((2, 5)).view(), 1).unwrap();
        let two = weighted_covariance(&x, Array2::from_elem((2, 5), 2.0).view(), 1).unwrap();
        for (a, b) in one.o.iter().zip(two.o.iter()) {
            assert!((a - b * 2.0).norm() < 1e-15);
        }
        assert!(one.max_hermitian_error() < 1e-12);
        let mut plain = DMatrix::<Complex64>::zeros(2, 2);
        for t in 0..5 {
            for i in 0..2 {
                for j in 0..2 {
                    plain[(i, j)] += x.bins[[i, 1, t]] * x.bins[[j, 1, t]].conj() / 5.0;
                }
            }
        }
        assert!((plain - &one.o).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn ip_update_identity_and_hand_case() {
        let mut w = DemixingSet::identity(2, 1);
        let o = WeightedCovariance { o: DMatrix::identity(2, 2) };
        ip_update(&mut w, &o, 0, 0).unwrap();
        assert_eq!(w.w[0], DMatrix::identity(2, 2));

        let mut w = DemixingSet::identity(2, 1);
        let o = WeightedCovariance {
            o: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(4.0, 0.0), c(1.0, 0.0)])),
        };
        ip_update(&mut w, &o, 0, 0).unwrap();
        let w1 = w.filter(0, 0);
        assert!((w1[0] - c(0.5, 0.0)).norm() < 1e-12);
        assert!(w1[1].norm() < 1e-12);
    }

    #[test]
    fn singular_covariance_reports_location() {
        let mut w = DemixingSet::identity(2, 3);
        let o = WeightedCovariance { o: DMatrix::zeros(2, 2) };
        assert!(matches!(
            ip_update(&mut w, &o, 1, 2),
            Err(Error::Singular { source_index: 1, freq: 2 })
        ));
        let reg = o.regularized(1e-10);
        assert!(ip_update(&mut w, &reg, 1, 2).is_ok());
    }

    #[test]
    fn projection_back_restores_reference_scale() {
        let bins = Array3::from_shape_fn((2, 2, 6), |(n, f, t)| {
            c(((n * 7 + f * 3 + t) as f64).sin(), ((n + 2 * t + f) as f64).cos())
        });
        let x = spec(bins);
        let y = x.scale(c(0.0, 3.0));
        let pb = projection_back(&y, &x, 0).unwrap();
        for f in 0..2 {
            for t in 0..6 {
                assert!((pb.bins[[0, f, t]] - x.bins[[0, f, t]]).norm() < 1e-12);
            }
        }
    }
}

//! BSS-eval style SDR/SIR with time-invariant distortion filters and
//! best-permutation matching.
//!
//! Each estimate is decomposed as `s_target + e_interf + e_artif`, where
//! `s_target` is its projection onto `filter_len` delayed copies of the
//! matched reference, and `s_target + e_interf` its projection onto the
//! delayed copies of all references.

use std::sync::Arc;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::TimeSignal;

/// Cap applied to ratios with (numerically) zero error energy.
pub const DB_CAP: f64 = 100.0;
pub const MAX_SOURCES: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub target: f64,
    pub interference: f64,
    pub artifact: f64,
    /// `||estimate||^2`.
    pub total: f64,
}

/// Metrics indexed by reference source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sdr: Vec<f64>,
    pub sir: Vec<f64>,
    /// `permutation[i]` is the estimate matched to reference `i`.
    pub permutation: Vec<usize>,
    pub energies: Vec<Decomposition>,
}

impl MetricReport {
    pub fn mean_sdr(&self) -> f64 {
        self.sdr.iter().sum::<f64>() / self.sdr.len() as f64
    }

    pub fn mean_sir(&self) -> f64 {
        self.sir.iter().sum::<f64>() / self.sir.len() as f64
    }
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den <= num * 1e-10 {
        DB_CAP
    } else if num <= den * 1e-10 {
        -DB_CAP
    } else {
        (10.0 * (num / den).log10()).clamp(-DB_CAP, DB_CAP)
    }
}

struct Correlator {
    nfft: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Correlator {
    fn new(nfft: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { nfft, fwd: planner.plan_fft_forward(nfft), inv: planner.plan_fft_inverse(nfft) }
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        buf
    }

    /// `out[k mod nfft] = sum_u a(u) b(u + k)`.
    fn xcorr(&self, a: &[Complex64], b: &[Complex64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x.conj() * y).collect();
        self.inv.process(&mut buf);
        buf.iter().map(|z| z.re / self.nfft as f64).collect()
    }

    /// Linear convolution truncated to `out_len`.
    fn convolve(&self, a: &[Complex64], filt: &[f64], out_len: usize) -> Vec<f64> {
        let fs = self.spectrum(filt);
        let mut buf: Vec<Complex64> = a.iter().zip(&fs).map(|(x, y)| x * y).collect();
        self.inv.process(&mut buf);
        buf.iter().take(out_len).map(|z| z.re / self.nfft as f64).collect()
    }
}

fn lag(xc: &[f64], k: isize) -> f64 {
    let n = xc.len() as isize;
    xc[k.rem_euclid(n) as usize]
}

enum Factor {
    Cholesky(nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(g: DMatrix<f64>) -> Self {
        if let Some(ch) = g.clone().cholesky() {
            return Factor::Cholesky(ch);
        }
        let ridge = 1e-10 * g.trace().max(f64::MIN_POSITIVE) / g.nrows() as f64;
        let mut reg = g;
        for i in 0..reg.nrows() {
            reg[(i, i)] += ridge;
        }
        match reg.clone().cholesky() {
            Some(ch) => Factor::Cholesky(ch),
            None => Factor::Lu(reg.lu()),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Cholesky(ch) => ch.solve(rhs),
            Factor::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

/// Computes SDR/SIR for every reference under the SIR-maximizing assignment.
pub fn bss_eval(
    estimates: &TimeSignal,
    references: &TimeSignal,
    filter_len: usize,
) -> Result<MetricReport> {
    let n = references.n_channels();
    let len = references.len();
    if estimates.n_channels() != n || estimates.len() != len {
        return Err(Error::ShapeMismatch(format!(
            "estimates {}x{} vs references {}x{}",
            estimates.n_channels(),
            estimates.len(),
            n,
            len
        )));
    }
    if n == 0 || len == 0 {
        return Err(Error::InvalidArgument("no signals to evaluate".into()));
    }
    if n > MAX_SOURCES {
        return Err(Error::TooManySources(n));
    }
    if filter_len == 0 {
        return Err(Error::InvalidArgument("filter_len must be >= 1".into()));
    }
    let refs: Vec<Vec<f64>> = references.samples().rows().into_iter().map(|r| r.to_vec()).collect();
    let ests: Vec<Vec<f64>> = estimates.samples().rows().into_iter().map(|r| r.to_vec()).collect();
    for (i, r) in refs.iter().enumerate() {
        if r.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroEnergyReference(i));
        }
    }

    let l = filter_len;
    let padded = len + l - 1;
    let corr = Correlator::new((len + l).next_power_of_two());
    let ref_spec: Vec<Vec<Complex64>> = refs.iter().map(|r| corr.spectrum(r)).collect();
    let est_spec: Vec<Vec<Complex64>> = ests.iter().map(|e| corr.spectrum(e)).collect();

    // Gram matrix of all delayed references: block (i, j) at (t1, t2) is
    // sum_u s_i(u) s_j(u + t1 - t2).
    let mut gram = DMatrix::<f64>::zeros(n * l, n * l);
    for i in 0..n {
        for j in i..n {
            let xc = corr.xcorr(&ref_spec[i], &ref_spec[j]);
            for t1 in 0..l {
                for t2 in 0..l {
                    let v = lag(&xc, t1 as isize - t2 as isize);
                    gram[(i * l + t1, j * l + t2)] = v;
                    gram[(j * l + t2, i * l + t1)] = v;
                }
            }
        }
    }

    let block_indices =
        |sources: &[usize]| -> Vec<usize> { sources.iter().flat_map(|&s| (s * l)..(s * l + l)).collect() };
    let factor_for = |sources: &[usize]| {
        let idx = block_indices(sources);
        Factor::new(gram.select_rows(&idx).select_columns(&idx))
    };
    let all: Vec<usize> = (0..n).collect();
    let all_factor = factor_for(&all);
    let single_factors: Vec<Factor> = (0..n).map(|i| factor_for(&[i])).collect();

    // Projection of an estimate onto the delayed copies of `sources`.
    let project = |est: usize, sources: &[usize], factor: &Factor| -> Vec<f64> {
        let mut rhs = DVector::zeros(sources.len() * l);
        for (bi, &s) in sources.iter().enumerate() {
            let xc = corr.xcorr(&ref_spec[s], &est_spec[est]);
            for t in 0..l {
                rhs[bi * l + t] = lag(&xc, t as isize);
            }
        }
        let coef = factor.solve(&rhs);
        let mut out = vec![0.0; padded];
        for (bi, &s) in sources.iter().enumerate() {
            let filt: Vec<f64> = coef.rows(bi * l, l).iter().cloned().collect();
            let part = corr.convolve(&ref_spec[s], &filt, padded);
            out.iter_mut().zip(part).for_each(|(o, p)| *o += p);
        }
        out
    };

    // decomp[j][i]: estimate j against reference i.
    let mut decomp = vec![vec![Decomposition::default(); n]; n];
    for (j, est) in ests.iter().enumerate() {
        let mut padded_est = est.clone();
        padded_est.resize(padded, 0.0);
        let p_all = project(j, &all, &all_factor);
        let total: f64 = est.iter().map(|v| v * v).sum();
        let artifact: f64 = padded_est.iter().zip(&p_all).map(|(e, p)| (e - p).powi(2)).sum();
        for (i, cell) in decomp[j].iter_mut().enumerate() {
            let target_vec = project(j, &[i], &single_factors[i]);
            let target: f64 = target_vec.iter().map(|v| v * v).sum();
            let interference: f64 =
                p_all.iter().zip(&target_vec).map(|(p, t)| (p - t).powi(2)).sum();
            *cell = Decomposition { target, interference, artifact, total };
        }
    }

    let sir_of = |d: &Decomposition| ratio_db(d.target, d.interference);
    let sdr_of = |d: &Decomposition| ratio_db(d.target, d.interference + d.artifact);

    let best = (0..n)
        .permutations(n)
        .max_by(|p, q| {
            let sp: f64 = p.iter().enumerate().map(|(i, &j)| sir_of(&decomp[j][i])).sum();
            let sq: f64 = q.iter().enumerate().map(|(i, &j)| sir_of(&decomp[j][i])).sum();
            sp.total_cmp(&sq)
        })
        .expect("at least one permutation");

    let energies: Vec<Decomposition> = best.iter().enumerate().map(|(i, &j)| decomp[j][i]).collect();
    Ok(MetricReport {
        sdr: energies.iter().map(sdr_of).collect(),
        sir: energies.iter().map(sir_of).collect(),
        permutation: best,
        energies,
    })
}

/// Per-reference SIR gain of `after` over `before`.
pub fn sir_improvement(before: &MetricReport, after: &MetricReport) -> Result<Vec<f64>> {
    if before.sir.len() != after.sir.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} sources",
            before.sir.len(),
            after.sir.len()
        )));
    }
    Ok(after.sir.iter().zip(&before.sir).map(|(a, b)| a - b).collect())
}

/// Per-reference SDR gain of `after` over `before`.
pub fn sdr_improvement(before: &MetricReport, after: &MetricReport) -> Result<Vec<f64>> {
    if before.sdr.len() != after.sdr.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} sources",
            before.sdr.len(),
            after.sdr.len()
        )));
    }
    Ok(after.sdr.iter().zip(&before.sdr).map(|(a, b)| a - b).collect())
}

//! Low-rank nonnegative variance model `sigma^2 = u v` fitted with
//! Itakura-Saito multiplicative (majorization-minimization) updates.

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const FACTOR_FLOOR: f64 = 1e-12;

/// Basis `u` (F x K) and activations `v` (K x T) for one source.
#[derive(Clone, Debug, PartialEq)]
pub struct NmfModel {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

/// Nonnegative targets `p[f, t]` the model is fitted to.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanMarginals {
    pub p: Array2<f64>,
}

impl PlanMarginals {
    pub fn new(p: Array2<f64>) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "plan marginals must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { p })
    }
}

impl NmfModel {
    pub fn new(u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        if u.ncols() != v.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "u is {:?} but v is {:?}",
                u.dim(),
                v.dim()
            )));
        }
        if u.iter().chain(v.iter()).any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument("factors must be strictly positive".into()));
        }
        Ok(Self { u, v })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_bins(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.v.ncols()
    }

    /// `sigma^2[f, t] = sum_k u[f, k] v[k, t]`.
    pub fn variance(&self) -> Array2<f64> {
        self.u.dot(&self.v)
    }

    /// One sweep: all of `u`, then all of `v` against the refreshed model.
    pub fn update(&mut self, target: &PlanMarginals) -> Result<()> {
        if target.p.dim() != (self.n_bins(), self.n_frames()) {
            return Err(Error::ShapeMismatch(format!(
                "targets {:?} vs model {:?}",
                target.p.dim(),
                (self.n_bins(), self.n_frames())
            )));
        }
        let p = &target.p;

        let (weighted, inv) = Self::ratios(p, &self.variance());
        let num = weighted.dot(&self.v.t());
        let den = inv.dot(&self.v.t());
        Zip::from(&mut self.u).and(&num).and(&den).for_each(|u, &n, &d| {
            *u = (*u * (n / d).sqrt()).max(FACTOR_FLOOR);
        });

        let (weighted, inv) = Self::ratios(p, &self.variance());
        let num = self.u.t().dot(&weighted);
        let den = self.u.t().dot(&inv);
        Zip::from(&mut self.v).and(&num).and(&den).for_each(|v, &n, &d| {
            *v = (*v * (n / d).sqrt()).max(FACTOR_FLOOR);
        });
        Ok(())
    }

    /// `(p / sigma^2^2, 1 / sigma^2)`.
    fn ratios(p: &Array2<f64>, sigma2: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let inv = sigma2.mapv(|s| 1.0 / s);
        let mut weighted = p.clone();
        Zip::from(&mut weighted).and(&inv).for_each(|w, &i| *w *= i * i);
        (weighted, inv)
    }
}

/// Factors drawn i.i.d. uniform on `[0.1, 1.0]`.
pub fn init_nmf(n_bins: usize, n_frames: usize, rank: usize, seed: u64) -> Result<NmfModel> {
    if n_bins == 0 || n_frames == 0 || rank == 0 {
        return Err(Error::InvalidArgument("F, T and K must all be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Array2::from_shape_simple_fn((n_bins, rank), || rng.gen_range(0.1..=1.0));
    let v = Array2::from_shape_simple_fn((rank, n_frames), || rng.gen_range(0.1..=1.0));
    Ok(NmfModel { u, v })
}

pub fn update_nmf(model: &NmfModel, marg: &PlanMarginals) -> Result<NmfModel> {
    let mut next = model.clone();
    next.update(marg)?;
    Ok(next)
}

pub fn variance(model: &NmfModel) -> Array2<f64> {
    model.variance()
}

/// `D_IS(p | s) = sum p/s - ln(p/s) - 1`, with `p` floored.
pub fn is_divergence(p: &Array2<f64>, sigma2: &Array2<f64>) -> f64 {
    p.iter()
        .zip(sigma2.iter())
        .map(|(&p, &s)| {
            let r = p.max(FACTOR_FLOOR) / s;
            r - r.ln() - 1.0
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_is_deterministic_and_in_range() {
        let a = init_nmf(16, 8, 10, 42).unwrap();
        let b = init_nmf(16, 8, 10, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.u.dim(), (16, 10));
        assert_eq!(a.v.dim(), (10, 8));
        assert!(a.u.iter().chain(a.v.iter()).all(|&x| (0.1..=1.0).contains(&x)));
        assert_ne!(a, init_nmf(16, 8, 10, 43).unwrap());
        assert!(init_nmf(0, 8, 2, 0).is_err());
    }

    #[test]
    fn variance_is_product() {
        let m = NmfModel::new(Array2::ones((2, 1)), Array2::ones((1, 3))).unwrap();
        assert_eq!(m.variance(), Array2::<f64>::ones((2, 3)));
        let m = NmfModel::new(array![[1.0, 2.0], [3.0, 4.0]], array![[1.0], [0.5]]).unwrap();
        assert_eq!(m.variance(), array![[1.0 + 1.0], [3.0 + 2.0]]);
    }

    #[test]
    fn exact_match_is_stationary() {
        let m = init_nmf(6, 5, 2, 3).unwrap();
        let target = PlanMarginals::new(m.variance()).unwrap();
        let next = update_nmf(&m, &target).unwrap();
        for (a, b) in next.u.iter().chain(next.v.iter()).zip(m.u.iter().chain(m.v.iter())) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_sweep_matches_hand_computation() {
        // p = 4, u = v = 1: u <- 1 * sqrt((4/1) / (1/1)) = 2, then with
        // sigma^2 = 2: v <- 1 * sqrt((4*2/4) / (2/2)) = sqrt(2).
        let m = NmfModel::new(array![[1.0]], array![[1.0]]).unwrap();
        let target = PlanMarginals::new(array![[4.0]]).unwrap();
        let next = update_nmf(&m, &target).unwrap();
        assert!((next.u[[0, 0]] - 2.0).abs() < 1e-15);
        assert!((next.v[[0, 0]] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut m = init_nmf(4, 3, 2, 0).unwrap();
        let target = PlanMarginals::new(Array2::ones((4, 4))).unwrap();
        assert!(m.update(&target).is_err());
        assert!(PlanMarginals::new(array![[-1.0]]).is_err());
    }
}

//! Weighted unbalanced entropic optimal transport between a source's
//! normalized power spectrum and its normalized model variance spectrum.
//!
//! The plan minimizes
//!
//! ```text
//! <Q, C - log U> + (1/lambda) sum Q log Q + gamma [KL(Q1 | a) + KL(Q^T 1 | b)]
//! ```
//!
//! with `C[i,j] = (log a_i - log b_j)^2`, a Gaussian band weight `U`, and
//! generalized KL penalties on both marginals. The minimizer has the form
//! `Q = diag(nu) K diag(xi)` with `K = U^lambda * exp(-lambda C - 1)`, and the
//! scalings are found by alternating updates raised to the power
//! `rho = lambda gamma / (lambda gamma + 1)`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OtConfig {
    /// Inverse temperature of the entropic term.
    pub lambda: f64,
    /// Weight of the KL marginal penalties.
    pub gamma: f64,
    pub max_inner_iters: usize,
    /// Stop when the max relative change of both scalings drops below this.
    pub tol: f64,
    /// Floor applied to marginal entries and log arguments.
    pub eps_floor: f64,
}

impl Default for OtConfig {
    fn default() -> Self {
        Self { lambda: 4.0, gamma: 1.0, max_inner_iters: 200, tol: 1e-6, eps_floor: 1e-12 }
    }
}

impl OtConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.lambda) || !ok(self.gamma) || !ok(self.tol) {
            return Err(Error::InvalidArgument(format!(
                "lambda, gamma and tol must be positive and finite (got {}, {}, {})",
                self.lambda, self.gamma, self.tol
            )));
        }
        if !(self.eps_floor >= 0.0) || self.max_inner_iters == 0 {
            return Err(Error::InvalidArgument(
                "eps_floor must be >= 0 and max_inner_iters >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Exponent of the scaling updates; tends to 1 as `gamma` grows.
    pub fn rho(&self) -> f64 {
        let lg = self.lambda * self.gamma;
        lg / (lg + 1.0)
    }
}

/// Normalized marginals of one `(source, frame)` transport problem.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalPair {
    /// Normalized squared magnitudes of the current source estimate.
    pub a: Array1<f64>,
    /// Normalized model variances.
    pub b: Array1<f64>,
    /// Unnormalized `sum_f |y(f,t)|^2`.
    pub total_energy: f64,
}

impl MarginalPair {
    /// Validates already-normalized marginals.
    pub fn new(a: Array1<f64>, b: Array1<f64>, total_energy: f64) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "marginals have lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        for (name, v) in [("a", &a), ("b", &b)] {
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidArgument(format!("marginal {name} not nonnegative")));
            }
            let s = v.sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("marginal {name} sums to {s}")));
            }
        }
        Ok(Self { a, b, total_energy })
    }

    /// Normalizes a power spectrum and a variance spectrum onto the simplex,
    /// flooring entries at `eps_floor`.
    pub fn from_spectra(power: &[f64], variance: &[f64], eps_floor: f64) -> Result<Self> {
        if power.len() != variance.len() || power.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "spectra have lengths {} and {}",
                power.len(),
                variance.len()
            )));
        }
        let total_energy: f64 = power.iter().sum();
        Ok(Self {
            a: normalize_floored(power, eps_floor)?,
            b: normalize_floored(variance, eps_floor)?,
            total_energy,
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

fn normalize_floored(v: &[f64], eps: f64) -> Result<Array1<f64>> {
    let s: f64 = v.iter().sum();
    if !s.is_finite() || s <= 0.0 || v.iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cannot normalize spectrum with total {s}"
        )));
    }
    let floored: Array1<f64> = v.iter().map(|x| (x / s).max(eps)).collect();
    let s2 = floored.sum();
    Ok(floored / s2)
}

/// Gaussian weight on bin distance, normalized so its largest entry is 1.
#[derive(Clone, Debug)]
pub struct AmplitudeWeight {
    pub u: Array2<f64>,
    /// Elementwise `ln U`, kept separately so far-off-diagonal entries do
    /// not lose precision.
    pub log_u: Array2<f64>,
    pub eta: f64,
}

impl AmplitudeWeight {
    pub fn n_bins(&self) -> usize {
        self.u.nrows()
    }
}

pub fn build_amplitude_weight(n_bins: usize, eta: f64) -> Result<AmplitudeWeight> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidArgument(format!("eta must be > 0, got {eta}")));
    }
    if n_bins < 1 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * eta);
    let two_var = 2.0 * eta * eta;
    let raw = Array2::from_shape_fn((n_bins, n_bins), |(i, j)| {
        let d = i as f64 - j as f64;
        norm * (-(d * d) / two_var).exp()
    });
    let max = raw.iter().cloned().fold(0.0, f64::max);
    let log_max = norm.ln();
    let log_u = Array2::from_shape_fn((n_bins, n_bins), |(i, j)| {
        let d = i as f64 - j as f64;
        norm.ln() - (d * d) / two_var - log_max
    });
    Ok(AmplitudeWeight { u: raw / max, log_u, eta })
}

/// Squared log-ratio ground cost.
#[derive(Clone, Debug)]
pub struct CostMatrix {
    pub c: Array2<f64>,
}

pub fn build_cost(a: &Array1<f64>, b: &Array1<f64>, eps_floor: f64) -> CostMatrix {
    let la: Vec<f64> = a.iter().map(|x| x.max(eps_floor).ln()).collect();
    let lb: Vec<f64> = b.iter().map(|x| x.max(eps_floor).ln()).collect();
    CostMatrix {
        c: Array2::from_shape_fn((la.len(), lb.len()), |(i, j)| {
            let d = la[i] - lb[j];
            d * d
        }),
    }
}

fn log_kernel(cost: &CostMatrix, weight: &AmplitudeWeight, lambda: f64) -> Array2<f64> {
    let mut lk = weight.log_u.clone();
    lk.zip_mut_with(&cost.c, |l, &c| *l = lambda * *l - lambda * c - 1.0);
    lk
}

/// `K = U^lambda * exp(-lambda C - 1)`, elementwise.
pub fn build_kernel(cost: &CostMatrix, weight: &AmplitudeWeight, lambda: f64) -> Result<Array2<f64>> {
    if cost.c.dim() != weight.u.dim() {
        return Err(Error::ShapeMismatch(format!(
            "cost {:?} vs weight {:?}",
            cost.c.dim(),
            weight.u.dim()
        )));
    }
    Ok(log_kernel(cost, weight, lambda).mapv_into(f64::exp))
}

/// Log-domain scalings, usable to warm-start a later solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Scalings {
    pub log_nu: Array1<f64>,
    pub log_xi: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub q: Array2<f64>,
    pub nu: Array1<f64>,
    pub xi: Array1<f64>,
    pub kernel: Array2<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// The solve fell back to log-domain updates; `nu`/`xi` are then the
    /// exponentials of the log scalings and may saturate.
    pub stabilized: bool,
    pub scalings: Scalings,
}

impl TransportPlan {
    /// `Q 1`.
    pub fn row_sums(&self) -> Array1<f64> {
        self.q.sum_axis(ndarray::Axis(1))
    }

    /// `Q^T 1`.
    pub fn col_sums(&self) -> Array1<f64> {
        self.q.sum_axis(ndarray::Axis(0))
    }
}

fn matvec(k: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    const LANES: usize = 8;
    let split = n - n % LANES;
    let (xc, xr) = x.split_at(split);
    for (o, row) in out.iter_mut().zip(k.chunks_exact(n)) {
        let (rc, rr) = row.split_at(split);
        // Independent lane sums let the reduction vectorize.
        let mut acc = [0.0f64; LANES];
        for (r, x) in rc.chunks_exact(LANES).zip(xc.chunks_exact(LANES)) {
            let r: &[f64; LANES] = r.try_into().expect("lane-sized chunk");
            let x: &[f64; LANES] = x.try_into().expect("lane-sized chunk");
            for l in 0..LANES {
                acc[l] += r[l] * x[l];
            }
        }
        let tail: f64 = rr.iter().zip(xr).map(|(a, b)| a * b).sum();
        *o = acc.iter().sum::<f64>() + tail;
    }
}

fn matvec_t(k: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (row, &xi) in k.chunks_exact(n).zip(x) {
        if xi == 0.0 {
            continue;
        }
        for (o, &kij) in out.iter_mut().zip(row) {
            *o += kij * xi;
        }
    }
}

fn max_rel_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .map(|(n, o)| (n - o).abs() / o.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn log_rel_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .map(|(n, o)| (n - o).exp_m1().abs())
        .fold(0.0, f64::max)
}

fn logsumexp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + it.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Receives the current plan after every full sweep.
type Observer<'o> = Option<&'o mut dyn FnMut(&Array2<f64>, usize)>;

/// Final state of a solve. The plan is `Q_ij = exp(log_nu_i + logK_ij + log_xi_j)`;
/// when available, `absorbed = (K~, u, v)` gives `Q = diag(u) K~ diag(v)`
/// without another pass of exponentials.
struct Solved {
    log_nu: Vec<f64>,
    log_xi: Vec<f64>,
    absorbed: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    iterations: usize,
    converged: bool,
    stabilized: bool,
}

impl Solved {
    fn plan(&self, log_k: &[f64], n: usize) -> Array2<f64> {
        match &self.absorbed {
            Some((kt, u, v)) => Array2::from_shape_fn((n, n), |(i, j)| u[i] * kt[i * n + j] * v[j]),
            None => Array2::from_shape_fn((n, n), |(i, j)| {
                (self.log_nu[i] + log_k[i * n + j] + self.log_xi[j]).exp()
            }),
        }
    }

    fn row_sums(&self, log_k: &[f64], n: usize) -> Array1<f64> {
        match &self.absorbed {
            Some((kt, u, v)) => {
                let mut kv = vec![0.0; n];
                matvec(kt, n, v, &mut kv);
                kv.iter().zip(u).map(|(k, u)| k * u).collect()
            }
            None => self.plan(log_k, n).sum_axis(ndarray::Axis(1)),
        }
    }
}

/// Scalings are kept as `nu = exp(f) u`, `xi = exp(g) v` over the absorbed
/// kernel `K~_ij = exp(f_i + logK_ij + g_j)`. Once `u` or `v` leave
/// `[1/ABSORB, ABSORB]` they are folded into `f`, `g` and `K~` is rebuilt,
/// so the linear updates never overflow while following exactly the same
/// iterates as the plain scaling map.
const ABSORB: f64 = 1e30;

fn solve_scalings(
    log_k: &[f64],
    a: &[f64],
    b: &[f64],
    cfg: &OtConfig,
    warm: Option<&Scalings>,
    mut observe: Observer<'_>,
) -> Result<Solved> {
    let n = a.len();
    let rho = cfg.rho();
    let warm = warm.filter(|w| {
        w.log_nu.len() == n && w.log_xi.len() == n && w.log_nu.iter().chain(&w.log_xi).all(|v| v.is_finite())
    });
    // The first update of nu only reads xi, so the starting nu is free to
    // choose; shifting rows by their maximum keeps every row of K~ nonzero.
    let mut log_nu_prev: Vec<f64> = warm.map_or_else(|| vec![0.0; n], |w| w.log_nu.to_vec());
    let mut f: Vec<f64> = match warm {
        Some(w) => w.log_nu.to_vec(),
        None => log_k
            .chunks_exact(n)
            .map(|row| -row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
    };
    let mut g: Vec<f64> = warm.map_or_else(|| vec![0.0; n], |w| w.log_xi.to_vec());
    let mut u: Vec<f64> = log_nu_prev.iter().zip(&f).map(|(l, f)| (l - f).exp()).collect();
    let mut v = vec![1.0; n];
    let mut kt = vec![0.0; n * n];
    let mut ef = vec![0.0; n];
    let mut eg = vec![0.0; n];
    let rebuild = |f: &[f64], g: &[f64], kt: &mut [f64], ef: &mut [f64], eg: &mut [f64]| {
        for (i, (row, lrow)) in kt.chunks_exact_mut(n).zip(log_k.chunks_exact(n)).enumerate() {
            for ((k, &l), &gj) in row.iter_mut().zip(lrow).zip(g) {
                *k = (f[i] + l + gj).exp();
            }
        }
        ef.iter_mut().zip(f).for_each(|(e, f)| *e = ((rho - 1.0) * f).exp());
        eg.iter_mut().zip(g).for_each(|(e, g)| *e = ((rho - 1.0) * g).exp());
    };
    rebuild(&f, &g, &mut kt, &mut ef, &mut eg);
    let plan_of = |kt: &[f64], u: &[f64], v: &[f64]| {
        Array2::from_shape_fn((n, n), |(i, j)| u[i] * kt[i * n + j] * v[j])
    };
    if let Some(obs) = observe.as_mut() {
        obs(&plan_of(&kt, &u, &v), 0);
    }

    let mut kx = vec![0.0; n];
    let mut new_u = vec![0.0; n];
    let mut new_v = vec![0.0; n];
    let mut stabilized = false;
    let mut iterations = cfg.max_inner_iters;
    let mut converged = false;
    for it in 1..=cfg.max_inner_iters {
        matvec(&kt, n, &v, &mut kx);
        for i in 0..n {
            new_u[i] = (a[i] / kx[i]).powf(rho) * ef[i];
        }
        matvec_t(&kt, n, &new_u, &mut kx);
        for j in 0..n {
            new_v[j] = (b[j] / kx[j]).powf(rho) * eg[j];
        }
        let representable = new_u.iter().chain(&new_v).all(|x| x.is_finite() && *x > 0.0);
        if !representable {
            // Underflow in K~: redo this sweep fully in the log domain.
            let log_nu: Vec<f64> = f.iter().zip(&u).map(|(f, u)| f + u.ln()).collect();
            let log_xi: Vec<f64> = g.iter().zip(&v).map(|(g, v)| g + v.ln()).collect();
            return solve_log_domain(log_k, a, b, cfg, (log_nu, log_xi), it, observe);
        }
        let change = max_rel_change(&new_u, &u).max(max_rel_change(&new_v, &v));
        std::mem::swap(&mut u, &mut new_u);
        std::mem::swap(&mut v, &mut new_v);
        if let Some(obs) = observe.as_mut() {
            obs(&plan_of(&kt, &u, &v), it);
        }
        if change < cfg.tol {
            iterations = it;
            converged = true;
            break;
        }
        let out_of_range = u.iter().chain(&v).any(|x| !(1.0 / ABSORB..=ABSORB).contains(x));
        if out_of_range {
            stabilized = true;
            f.iter_mut().zip(&mut u).for_each(|(f, u)| {
                *f += u.ln();
                *u = 1.0;
            });
            g.iter_mut().zip(&mut v).for_each(|(g, v)| {
                *g += v.ln();
                *v = 1.0;
            });
            rebuild(&f, &g, &mut kt, &mut ef, &mut eg);
        }
    }
    log_nu_prev.iter_mut().zip(f.iter().zip(&u)).for_each(|(l, (f, u))| *l = f + u.ln());
    let log_xi: Vec<f64> = g.iter().zip(&v).map(|(g, v)| g + v.ln()).collect();
    Ok(Solved {
        log_nu: log_nu_prev,
        log_xi,
        absorbed: Some((kt, u, v)),
        iterations,
        converged,
        stabilized,
    })
}

/// Fully log-domain sweeps from iteration `first` on; slower but immune to
/// underflow of the kernel.
fn solve_log_domain(
    log_k: &[f64],
    a: &[f64],
    b: &[f64],
    cfg: &OtConfig,
    (mut f, mut g): (Vec<f64>, Vec<f64>),
    first: usize,
    mut observe: Observer<'_>,
) -> Result<Solved> {
    let n = a.len();
    let rho = cfg.rho();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let plan_of = |f: &[f64], g: &[f64]| {
        Array2::from_shape_fn((n, n), |(i, j)| (f[i] + log_k[i * n + j] + g[j]).exp())
    };
    let mut iterations = cfg.max_inner_iters;
    let mut converged = false;
    for it in first..=cfg.max_inner_iters {
        let new_f: Vec<f64> = log_k
            .chunks_exact(n)
            .zip(&log_a)
            .map(|(row, la)| rho * (la - logsumexp(row.iter().zip(&g).map(|(k, gj)| k + gj))))
            .collect();
        let new_g: Vec<f64> = (0..n)
            .map(|j| {
                let col = (0..n).map(|i| log_k[i * n + j] + new_f[i]);
                rho * (log_b[j] - logsumexp(col))
            })
            .collect();
        if new_f.iter().chain(&new_g).any(|v| !v.is_finite()) {
            return Err(Error::SinkhornDiverged { iteration: it });
        }
        let change = log_rel_change(&new_f, &f).max(log_rel_change(&new_g, &g));
        f = new_f;
        g = new_g;
        if let Some(obs) = observe.as_mut() {
            obs(&plan_of(&f, &g), it);
        }
        if change < cfg.tol {
            iterations = it;
            converged = true;
            break;
        }
    }
    Ok(Solved { log_nu: f, log_xi: g, absorbed: None, iterations, converged, stabilized: true })
}

struct Prepared {
    log_k: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn prepare(m: &MarginalPair, weight: &AmplitudeWeight, cfg: &OtConfig) -> Result<Prepared> {
    cfg.validate()?;
    let n = m.len();
    if weight.n_bins() != n {
        return Err(Error::ShapeMismatch(format!(
            "weight has {} bins, marginals {}",
            weight.n_bins(),
            n
        )));
    }
    let cost = build_cost(&m.a, &m.b, cfg.eps_floor);
    let log_k = log_kernel(&cost, weight, cfg.lambda).into_raw_vec_and_offset().0;
    Ok(Prepared {
        log_k,
        a: m.a.iter().map(|x| x.max(cfg.eps_floor)).collect(),
        b: m.b.iter().map(|x| x.max(cfg.eps_floor)).collect(),
    })
}

fn into_plan(p: &Prepared, s: Solved) -> Result<TransportPlan> {
    let n = p.a.len();
    let q = s.plan(&p.log_k, n);
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::SinkhornDiverged { iteration: s.iterations });
    }
    let kernel = Array2::from_shape_vec((n, n), p.log_k.iter().map(|l| l.exp()).collect())
        .expect("square kernel");
    Ok(TransportPlan {
        q,
        nu: s.log_nu.iter().map(|v| v.exp()).collect(),
        xi: s.log_xi.iter().map(|v| v.exp()).collect(),
        kernel,
        iterations_run: s.iterations,
        converged: s.converged,
        stabilized: s.stabilized,
        scalings: Scalings { log_nu: Array1::from(s.log_nu), log_xi: Array1::from(s.log_xi) },
    })
}

/// Runs the unbalanced scaling iterations from cold start.
pub fn sinkhorn_unbalanced(
    m: &MarginalPair,
    weight: &AmplitudeWeight,
    cfg: &OtConfig,
) -> Result<TransportPlan> {
    sinkhorn_unbalanced_warm(m, weight, cfg, None)
}

/// Same as [`sinkhorn_unbalanced`], starting from previous scalings.
pub fn sinkhorn_unbalanced_warm(
    m: &MarginalPair,
    weight: &AmplitudeWeight,
    cfg: &OtConfig,
    warm: Option<&Scalings>,
) -> Result<TransportPlan> {
    let p = prepare(m, weight, cfg)?;
    let s = solve_scalings(&p.log_k, &p.a, &p.b, cfg, warm, None)?;
    into_plan(&p, s)
}

/// Row sums `Q 1` of the plan, without materializing it.
#[derive(Clone, Debug)]
pub struct RowSolve {
    pub row_sums: Array1<f64>,
    pub scalings: Scalings,
    pub iterations_run: usize,
    pub converged: bool,
    pub stabilized: bool,
}

/// Warm-started solve returning only `Q 1`; the hot path of the separator.
pub fn sinkhorn_row_sums(
    m: &MarginalPair,
    weight: &AmplitudeWeight,
    cfg: &OtConfig,
    warm: Option<&Scalings>,
) -> Result<RowSolve> {
    let p = prepare(m, weight, cfg)?;
    let s = solve_scalings(&p.log_k, &p.a, &p.b, cfg, warm, None)?;
    let row_sums = s.row_sums(&p.log_k, p.a.len());
    if row_sums.iter().any(|v| !v.is_finite()) {
        return Err(Error::SinkhornDiverged { iteration: s.iterations });
    }
    Ok(RowSolve {
        row_sums,
        iterations_run: s.iterations,
        converged: s.converged,
        stabilized: s.stabilized,
        scalings: Scalings { log_nu: Array1::from(s.log_nu), log_xi: Array1::from(s.log_xi) },
    })
}

/// Runs the solver and records the objective after every full `nu`/`xi`
/// sweep; the first entry is the objective at the starting scalings.
pub fn sinkhorn_objective_trace(
    m: &MarginalPair,
    weight: &AmplitudeWeight,
    cfg: &OtConfig,
) -> Result<(TransportPlan, Vec<f64>)> {
    let p = prepare(m, weight, cfg)?;
    let cost = build_cost(&m.a, &m.b, cfg.eps_floor);
    let mut trace = Vec::new();
    let mut record = |q: &Array2<f64>, _: usize| {
        trace.push(objective_terms_with_cost(q, m, &cost, weight, cfg).total);
    };
    let s = solve_scalings(&p.log_k, &p.a, &p.b, cfg, None, Some(&mut record))?;
    Ok((into_plan(&p, s)?, trace))
}

/// `sigma_hat^2 = (Q^T 1) * total_energy`.
pub fn estimate_variances(plan: &TransportPlan, total_energy: f64) -> Array1<f64> {
    plan.col_sums().mapv(|c| (c * total_energy).max(0.0))
}

/// Components of the weighted objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms {
    /// `<Q, C - log U>`.
    pub transport: f64,
    /// `(1/lambda) sum Q log Q`, i.e. minus the scaled entropy.
    pub neg_entropy: f64,
    /// `gamma [KL(Q1 | a) + KL(Q^T 1 | b)]`.
    pub marginal_penalty: f64,
    pub total: f64,
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

fn generalized_kl(p: &Array1<f64>, q: &Array1<f64>, eps: f64) -> f64 {
    p.iter()
        .zip(q.iter())
        .map(|(&p, &q)| {
            let q = q.max(eps);
            if p > 0.0 {
                p * (p / q).ln() - p + q
            } else {
                q
            }
        })
        .sum()
}

fn objective_terms_with_cost(
    q: &Array2<f64>,
    m: &MarginalPair,
    cost: &CostMatrix,
    weight: &AmplitudeWeight,
    cfg: &OtConfig,
) -> ObjectiveTerms {
    let mut transport = 0.0;
    let mut qlogq = 0.0;
    for ((&qij, &cij), &lu) in q.iter().zip(cost.c.iter()).zip(weight.log_u.iter()) {
        if qij > 0.0 {
            transport += qij * (cij - lu);
            qlogq += xlogx(qij);
        }
    }
    let rows = q.sum_axis(ndarray::Axis(1));
    let cols = q.sum_axis(ndarray::Axis(0));
    let marginal_penalty = cfg.gamma
        * (generalized_kl(&rows, &m.a, cfg.eps_floor) + generalized_kl(&cols, &m.b, cfg.eps_floor));
    let neg_entropy = qlogq / cfg.lambda;
    ObjectiveTerms {
        transport,
        neg_entropy,
        marginal_penalty,
        total: transport + neg_entropy + marginal_penalty,
    }
}

/// Evaluates the weighted objective at an arbitrary plan `q`.
pub fn objective_terms(
    q: &Array2<f64>,
    m: &MarginalPair,
    weight: &AmplitudeWeight,
    cfg: &OtConfig,
) -> ObjectiveTerms {
    let cost = build_cost(&m.a, &m.b, cfg.eps_floor);
    objective_terms_with_cost(q, m, &cost, weight, cfg)
}

/// Total weighted objective of a solved plan. Monitoring only.
pub fn eval_objective(
    plan: &TransportPlan,
    m: &MarginalPair,
    weight: &AmplitudeWeight,
    cfg: &OtConfig,
) -> f64 {
    objective_terms(&plan.q, m, weight, cfg).total
}

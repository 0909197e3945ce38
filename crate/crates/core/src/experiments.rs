//! Simulation harness: synthetic data generation, validation-set tuning and
//! the recorded performance measures.
//!
//! Every replication draws its own random stream
//! (`ChaCha8Rng::seed_from_u64(seed)` with stream `rep`), so results do not
//! depend on how replications are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dfo::{dfo_solve, lipschitz_constant, DfoConfig, LIPSCHITZ_SAFETY};
use crate::error::{Error, Result};
use crate::l1path::{forward_stepwise_path, solve_l1_unit_sum_from};
use crate::problem::{objective, ConstraintSpec, RegressionData, Weights, ZERO_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t: usize,
    pub m: usize,
    pub k_star: usize,
    /// Positive entries of the true coefficient vector.
    pub p_pos: usize,
    /// Negative entries of the true coefficient vector.
    pub n_neg: usize,
    pub s_star: f64,
    pub rho: f64,
    pub snr: f64,
    pub replications: usize,
    pub seed: u64,
    /// Largest cardinality on the tuning grid.
    pub k_max: usize,
    /// The `s` grid is `{0, s*/steps, ..., 2 s*}`.
    pub s_steps: usize,
}

impl Default for SimConfig {
    /// `p_pos = 5`, `n_neg = 2` is a chosen split of `k* = 7`.
    fn default() -> Self {
        Self {
            t: 50,
            m: 100,
            k_star: 7,
            p_pos: 5,
            n_neg: 2,
            s_star: 2.0 / 3.0,
            rho: 0.2,
            snr: 1.0,
            replications: 10,
            seed: 0,
            k_max: 20,
            s_steps: 5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.m == 0 {
            return Err(Error::invalid("t and m must be positive"));
        }
        if self.p_pos + self.n_neg != self.k_star {
            return Err(Error::invalid("p_pos + n_neg must equal k_star"));
        }
        if self.k_star > self.m {
            return Err(Error::invalid("k_star must not exceed m"));
        }
        if self.p_pos == 0 {
            return Err(Error::invalid("at least one positive weight is required"));
        }
        if !(self.s_star >= 0.0) || !self.s_star.is_finite() {
            return Err(Error::invalid("s_star must be finite and nonnegative"));
        }
        if self.n_neg > 0 && self.s_star == 0.0 {
            return Err(Error::invalid("negative weights need s_star > 0"));
        }
        if self.n_neg == 0 && self.s_star > 0.0 {
            return Err(Error::invalid("s_star > 0 needs at least one negative weight"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must lie in [0, 1)"));
        }
        if !(self.snr > 0.0) || !self.snr.is_finite() {
            return Err(Error::invalid("snr must be positive and finite"));
        }
        if self.replications == 0 || self.k_max == 0 || self.s_steps == 0 {
            return Err(Error::invalid("replications, k_max and s_steps must be positive"));
        }
        Ok(())
    }

    /// `{0, s*/steps, 2 s*/steps, ..., 2 s*}` with duplicates removed.
    pub fn s_grid(&self) -> Vec<f64> {
        let mut grid: Vec<f64> =
            (0..=2 * self.s_steps).map(|i| self.s_star * i as f64 / self.s_steps as f64).collect();
        grid.dedup();
        grid
    }

    pub fn k_grid(&self) -> Vec<usize> {
        (1..=self.k_max.min(self.m)).collect()
    }
}

/// Random stream for replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// True coefficients: `p_pos` entries `(1 + s*)/p_pos` and `n_neg` entries
/// `-s*/n_neg` at random positions.
pub fn gen_beta_star<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Weights> {
    cfg.validate()?;
    let idx = sample(rng, cfg.m, cfg.k_star).into_vec();
    let mut w = Weights::zeros(cfg.m);
    let pos = (1.0 + cfg.s_star) / cfg.p_pos as f64;
    for &i in &idx[..cfg.p_pos] {
        w[i] = pos;
    }
    if cfg.n_neg > 0 {
        let neg = -cfg.s_star / cfg.n_neg as f64;
        for &i in &idx[cfg.p_pos..] {
            w[i] = neg;
        }
    }
    Ok(w)
}

/// `Sigma_ij = rho^|i - j|`.
pub fn covariance(m: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Draws `t` rows i.i.d. `N(0, Sigma)` through the Cholesky factor of `Sigma`.
pub fn gen_design<R: Rng + ?Sized>(
    t: usize,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let m = sigma.nrows();
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
    let z = DMatrix::from_fn(t, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(z * chol.l().transpose())
}

fn quad_form(v: &[f64], sigma: &DMatrix<f64>) -> f64 {
    let v = DVector::from_column_slice(v);
    v.dot(&(sigma * &v))
}

/// `y = X beta + e`, `e ~ N(0, sigma2 I)` with `sigma2 = beta' Sigma beta / snr`.
pub fn gen_response<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta_star: &[f64],
    snr: f64,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(snr > 0.0) {
        return Err(Error::invalid("snr must be positive"));
    }
    if x.ncols() != beta_star.len() || sigma.nrows() != beta_star.len() {
        return Err(Error::dim("design, covariance and coefficients disagree"));
    }
    let signal = quad_form(beta_star, sigma);
    if !(signal > 0.0) {
        return Err(Error::invalid("true coefficients carry no signal"));
    }
    let sd = (signal / snr).sqrt();
    let mean = x * DVector::from_column_slice(beta_star);
    Ok(mean.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal)))
}

/// `(b - b*)' Sigma (b - b*) / (b*' Sigma b*)`.
pub fn relative_risk(beta_hat: &[f64], beta_star: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    if beta_hat.len() != beta_star.len() || sigma.nrows() != beta_star.len() {
        return Err(Error::dim("relative risk inputs disagree in length"));
    }
    let denom = quad_form(beta_star, sigma);
    if denom == 0.0 {
        return Err(Error::invalid("relative risk undefined for zero signal"));
    }
    let diff: Vec<f64> = beta_hat.iter().zip(beta_star).map(|(a, b)| a - b).collect();
    Ok(quad_form(&diff, sigma) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Cardinality only (`s` fixed large).
    L0,
    /// Budget only (`k = m`).
    L1,
    /// Both restrictions.
    L0L1,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::L0, Method::L1, Method::L0L1];

    pub fn name(&self) -> &'static str {
        match self {
            Method::L0 => "L0",
            Method::L1 => "L1",
            Method::L0L1 => "L0L1",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub k: usize,
    pub s: f64,
    pub weights: Weights,
    pub validation_error: f64,
}

#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub k_grid: Vec<usize>,
    pub s_grid: Vec<f64>,
    pub dfo: DfoConfig,
    /// Objective accuracy of the convex fits.
    pub convex_tol: f64,
}

impl TuneOptions {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            k_grid: cfg.k_grid(),
            s_grid: cfg.s_grid(),
            dfo: DfoConfig::default(),
            convex_tol: 1e-8,
        }
    }
}

/// Fits every grid point for `method` on `train` and keeps the one with the
/// smallest squared error on `validation`. Ties go to smaller `k`, then
/// smaller `s`.
///
/// `L1` uses `k = m` and the `s` grid; `L0` uses `s = m` and the `k` grid;
/// `L0L1` uses the product grid. Cardinality-restricted fits start from the
/// forward-stepwise solution and are refined by descent.
pub fn tune_grid(
    train: &RegressionData,
    validation: &RegressionData,
    method: Method,
    opts: &TuneOptions,
) -> Result<TuneResult> {
    if train.n_vars() != validation.n_vars() {
        return Err(Error::dim("train and validation have different column counts"));
    }
    if opts.k_grid.is_empty() || opts.s_grid.is_empty() {
        return Err(Error::invalid("tuning grids must be nonempty"));
    }
    let m = train.n_vars();
    let mut dfo = opts.dfo.clone();
    if dfo.lipschitz_override.is_none() && method != Method::L1 {
        dfo.lipschitz_override = Some(lipschitz_constant(train)? * LIPSCHITZ_SAFETY);
    }
    let opts = &TuneOptions { dfo, ..opts.clone() };
    let mut fits: Vec<(usize, f64, Weights)> = Vec::new();
    match method {
        Method::L1 => {
            let mut warm: Option<Weights> = None;
            for &s in &opts.s_grid {
                let (w, _) = solve_l1_unit_sum_from(train, s, opts.convex_tol, warm.as_deref())?;
                warm = Some(w.clone());
                fits.push((m, s, w));
            }
        }
        Method::L0 => fits.extend(cardinality_fits(train, m as f64, opts)?),
        Method::L0L1 => {
            for &s in &opts.s_grid {
                fits.extend(cardinality_fits(train, s, opts)?);
            }
        }
    }
    let mut best: Option<TuneResult> = None;
    for (k, s, w) in fits {
        let err = objective(validation, &w)?;
        let better = match &best {
            None => true,
            Some(b) => {
                err < b.validation_error || (err == b.validation_error && (k, s) < (b.k, b.s))
            }
        };
        if better {
            best = Some(TuneResult { k, s, weights: w, validation_error: err });
        }
    }
    best.ok_or_else(|| Error::invalid("no grid point produced a fit"))
}

fn cardinality_fits(
    train: &RegressionData,
    s: f64,
    opts: &TuneOptions,
) -> Result<Vec<(usize, f64, Weights)>> {
    let m = train.n_vars();
    let k_top = opts.k_grid.iter().copied().max().unwrap_or(1).min(m);
    let path = forward_stepwise_path(train, s, k_top)?;
    opts.k_grid
        .iter()
        .map(|&k| {
            let k = k.min(m);
            let spec = ConstraintSpec::new(k, s)?;
            let (w, _) = dfo_solve(train, &spec, &path[k - 1], &opts.dfo)?;
            Ok((k, s, w))
        })
        .collect()
}

/// Measures recorded for one fitted method in one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMeasures {
    pub relative_risk: f64,
    pub nonzeros: usize,
    pub negative_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub method: Method,
    pub k: usize,
    pub s: f64,
    pub measures: SimMeasures,
}

/// One line of the aggregated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRow {
    pub method: String,
    pub snr: f64,
    pub s_star: f64,
    pub measure: String,
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub records: Vec<ReplicationRecord>,
    pub rows: Vec<MeasureRow>,
}

impl ExperimentTable {
    pub fn mean(&self, method: Method, measure: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method.name() && r.measure == measure).map(|r| r.mean)
    }
}

/// Runs one replication with its own random stream.
pub fn run_replication(cfg: &SimConfig, rep: usize) -> Result<Vec<ReplicationRecord>> {
    cfg.validate()?;
    let mut rng = replication_rng(cfg.seed, rep as u64);
    let beta = gen_beta_star(cfg, &mut rng)?;
    let sigma = covariance(cfg.m, cfg.rho);
    let x = gen_design(cfg.t, &sigma, &mut rng)?;
    let y = gen_response(&x, &beta, cfg.snr, &sigma, &mut rng)?;
    let xv = gen_design(cfg.t, &sigma, &mut rng)?;
    let yv = gen_response(&xv, &beta, cfg.snr, &sigma, &mut rng)?;
    let train = RegressionData::new(x, y)?;
    let validation = RegressionData::new(xv, yv)?;
    let opts = TuneOptions::from_config(cfg);

    Method::ALL
        .iter()
        .map(|&method| {
            let fit = tune_grid(&train, &validation, method, &opts)?;
            let measures = SimMeasures {
                relative_risk: relative_risk(&fit.weights, &beta, &sigma)?,
                nonzeros: fit.weights.iter().filter(|v| v.abs() > ZERO_TOL).count(),
                negative_sum: fit.weights.negative_sum(),
            };
            Ok(ReplicationRecord { replication: rep, method, k: fit.k, s: fit.s, measures })
        })
        .collect()
}

/// Mean and standard error (`sd / sqrt(n)`, zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs all replications in parallel and aggregates the measures.
pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentTable> {
    cfg.validate()?;
    let per_rep: Vec<Vec<ReplicationRecord>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect::<Result<_>>()?;
    let records: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for method in Method::ALL {
        let of: Vec<&SimMeasures> =
            records.iter().filter(|r| r.method == method).map(|r| &r.measures).collect();
        let columns: [(&str, Vec<f64>); 3] = [
            ("relative_risk", of.iter().map(|m| m.relative_risk).collect()),
            ("nonzeros", of.iter().map(|m| m.nonzeros as f64).collect()),
            ("negative_sum", of.iter().map(|m| m.negative_sum).collect()),
        ];
        for (measure, values) in columns {
            let (mean, stderr) = mean_stderr(&values);
            rows.push(MeasureRow {
                method: method.name().to_string(),
                snr: cfg.snr,
                s_star: cfg.s_star,
                measure: measure.to_string(),
                mean,
                stderr,
                reps: values.len(),
            });
        }
    }
    Ok(ExperimentTable { records, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            t: 20,
            m: 12,
            k_star: 3,
            p_pos: 2,
            n_neg: 1,
            s_star: 0.5,
            k_max: 5,
            s_steps: 2,
            replications: 2,
            ..SimConfig::default()
        }
    }

    #[test]
    fn beta_star_examples() {
        let cfg = SimConfig::default();
        let mut rng = replication_rng(1, 0);
        let b = gen_beta_star(&cfg, &mut rng).unwrap();
        let pos: Vec<f64> = b.iter().copied().filter(|v| *v > 0.0).collect();
        let neg: Vec<f64> = b.iter().copied().filter(|v| *v < 0.0).collect();
        assert_eq!(pos.len(), 5);
        assert_eq!(neg.len(), 2);
        assert!(pos.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(neg.iter().all(|v| (v + 1.0 / 3.0).abs() < 1e-15));
        assert!((b.sum() - 1.0).abs() < 1e-12);
        assert!((b.negative_sum() - 2.0 / 3.0).abs() < 1e-12);

        let single =
            SimConfig { k_star: 1, p_pos: 1, n_neg: 0, s_star: 0.0, ..SimConfig::default() };
        let b = gen_beta_star(&single, &mut rng).unwrap();
        assert_eq!(b.nonzeros(), 1);
        assert_eq!(b.sum(), 1.0);
    }

    #[test]
    fn config_rejects_zero_negative_mass_with_negatives() {
        let cfg = SimConfig { s_star: 0.0, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { p_pos: 4, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn covariance_entries() {
        let s = covariance(4, 0.2);
        assert!((s[(0, 1)] - 0.2).abs() < 1e-15);
        assert!((s[(0, 2)] - 0.04).abs() < 1e-15);
        assert_eq!(covariance(3, 0.0), DMatrix::identity(3, 3));
    }

    #[test]
    fn design_sample_covariance() {
        let sigma = covariance(3, 0.5);
        let mut rng = replication_rng(3, 0);
        let x = gen_design(50_000, &sigma, &mut rng).unwrap();
        let emp = x.tr_mul(&x) / 50_000.0;
        for i in 0..3 {
            for j in 0..3 {
                assert!((emp[(i, j)] - sigma[(i, j)]).abs() < 0.02, "{i},{j}");
            }
        }
    }

    #[test]
    fn response_noise_level() {
        let sigma = covariance(4, 0.2);
        let beta = [0.7, 0.5, -0.2, 0.0];
        let mut rng = replication_rng(4, 0);
        let x = gen_design(40_000, &sigma, &mut rng).unwrap();
        let y = gen_response(&x, &beta, 1.0, &sigma, &mut rng).unwrap();
        let resid = &y - &x * DVector::from_column_slice(&beta);
        let var = resid.norm_squared() / 40_000.0;
        let target = quad_form(&beta, &sigma);
        assert!((var / target - 1.0).abs() < 0.05);

        let y = gen_response(&x, &beta, 1e12, &sigma, &mut rng).unwrap();
        let rms = ((&y - &x * DVector::from_column_slice(&beta)).norm_squared() / 40_000.0).sqrt();
        assert!(rms < 1e-4);
        assert!(gen_response(&x, &[0.0; 4], 1.0, &sigma, &mut rng).is_err());
    }

    #[test]
    fn relative_risk_examples() {
        let sigma = covariance(5, 0.3);
        let b = [0.4, 0.0, 0.9, -0.3, 0.0];
        assert_eq!(relative_risk(&b, &b, &sigma).unwrap(), 0.0);
        assert_eq!(relative_risk(&[0.0; 5], &b, &sigma).unwrap(), 1.0);
        let id = DMatrix::identity(3, 3);
        assert_eq!(relative_risk(&[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &id).unwrap(), 1.0);
        assert!(relative_risk(&b, &[0.0; 5], &sigma).is_err());
    }

    #[test]
    fn grids() {
        let cfg = SimConfig::default();
        let g = cfg.s_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert!((g[10] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(cfg.k_grid(), (1..=20).collect::<Vec<_>>());
        let zero = SimConfig { k_star: 1, p_pos: 1, n_neg: 0, s_star: 0.0, ..cfg };
        assert_eq!(zero.s_grid(), vec![0.0]);
    }

    #[test]
    fn tuning_on_realizable_data_reaches_zero_error() {
        let cfg = small();
        let mut rng = replication_rng(5, 0);
        let beta = gen_beta_star(&cfg, &mut rng).unwrap();
        let sigma = covariance(cfg.m, cfg.rho);
        let x = gen_design(cfg.t, &sigma, &mut rng).unwrap();
        let y = &x * DVector::from_column_slice(&beta);
        let data = RegressionData::new(x, y).unwrap();
        let mut opts = TuneOptions::from_config(&cfg);
        opts.dfo.epsilon = 1e-14;
        for method in [Method::L0L1, Method::L0] {
            let fit = tune_grid(&data, &data, method, &opts).unwrap();
            assert!(fit.validation_error < 1e-6, "{method:?}: {}", fit.validation_error);
        }
        let l1 = tune_grid(&data, &data, Method::L1, &opts).unwrap();
        assert_eq!(l1.k, cfg.m);
    }

    #[test]
    fn experiment_is_deterministic_and_feasible() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 9);
        for r in &a.records {
            assert!(r.measures.relative_risk >= 0.0);
            assert!(r.measures.negative_sum <= r.s + 1e-8);
            assert!(r.measures.nonzeros <= r.k);
        }
    }

    #[test]
    fn mean_stderr_values() {
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}

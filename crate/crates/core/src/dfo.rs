//! Discrete first-order descent for general designs.
//!
//! Each iteration takes a gradient step on `f(b) = 0.5 ||y - X b||^2` with
//! step `1/L` and projects the result back onto the feasible set with the
//! exact orthogonal solver. For `L >= L*` (largest eigenvalue of `X'X`) the
//! objective never increases.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ortho;
use crate::problem::{
    is_feasible, ConstraintSpec, RegressionData, SolveReport, SolveStatus, Weights, FEASIBILITY_TOL,
};

/// Factor applied to the power-iteration estimate of `L*` before use.
pub const LIPSCHITZ_SAFETY: f64 = 1.0 + 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfoConfig {
    /// Stop once an iteration improves `f` by less than this.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub lipschitz_override: Option<f64>,
    /// Measure improvement relative to the current objective instead.
    pub relative: bool,
}

impl Default for DfoConfig {
    fn default() -> Self {
        Self { epsilon: 1e-6, max_iterations: 10_000, lipschitz_override: None, relative: false }
    }
}

impl DfoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if let Some(l) = self.lipschitz_override {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::invalid("lipschitz override must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Largest eigenvalue of `X'X` by power iteration.
pub fn lipschitz_constant(data: &RegressionData) -> Result<f64> {
    let x = data.x();
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("design matrix is identically zero"));
    }
    let m = x.ncols();
    // Deterministic, generic start vector.
    let mut v = DVector::from_fn(m, |i, _| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..100_000 {
        let xv = x * &v;
        let next_est = xv.norm_squared();
        let w = x.tr_mul(&xv);
        let norm = w.norm();
        if norm == 0.0 {
            // Start vector in the null space; restart along a coordinate.
            v = DVector::from_fn(m, |i, _| if i == 0 { 1.0 } else { 0.0 });
            continue;
        }
        let residual = (&w - &v * next_est).norm();
        v = w / norm;
        estimate = next_est;
        // Eigenvalue error is of order residual^2 / spectral gap.
        if residual <= 1e-7 * next_est {
            // Rayleigh quotient of the refreshed vector is never below the old one.
            let xv = x * &v;
            return Ok(xv.norm_squared().max(next_est));
        }
    }
    Ok(estimate)
}

/// `X'(X b - y)`, the gradient of `0.5 ||y - X b||^2`.
pub fn gradient(data: &RegressionData, w: &[f64]) -> Result<Vec<f64>> {
    let residual = data.predict(w)? - data.y();
    Ok(data.x().tr_mul(&residual).as_slice().to_vec())
}

fn half_sq_error(data: &RegressionData, w: &[f64]) -> f64 {
    let r = data.x() * DVector::from_column_slice(w) - data.y();
    0.5 * r.norm_squared()
}

/// One projected gradient step with step size `1 / lipschitz`.
pub fn dfo_step(
    data: &RegressionData,
    spec: &ConstraintSpec,
    w: &[f64],
    lipschitz: f64,
) -> Result<Weights> {
    if !(lipschitz > 0.0) {
        return Err(Error::invalid("Lipschitz constant must be positive"));
    }
    let g = gradient(data, w)?;
    let target: Vec<f64> = w.iter().zip(&g).map(|(b, gi)| b - gi / lipschitz).collect();
    ortho::project(&target, &spec.clamp_k(w.len()))
}

/// Result of [`dfo_solve_with_history`].
#[derive(Debug, Clone)]
pub struct DfoRun {
    pub weights: Weights,
    pub report: SolveReport,
    /// `||y - X b_r||^2` for every accepted iterate, starting with `init`.
    pub history: Vec<f64>,
}

/// Runs the descent from a feasible `init`.
pub fn dfo_solve(
    data: &RegressionData,
    spec: &ConstraintSpec,
    init: &[f64],
    cfg: &DfoConfig,
) -> Result<(Weights, SolveReport)> {
    let run = dfo_solve_with_history(data, spec, init, cfg)?;
    Ok((run.weights, run.report))
}

pub fn dfo_solve_with_history(
    data: &RegressionData,
    spec: &ConstraintSpec,
    init: &[f64],
    cfg: &DfoConfig,
) -> Result<DfoRun> {
    let start = Instant::now();
    cfg.validate()?;
    data.check_len(init)?;
    if !is_feasible(init, spec, FEASIBILITY_TOL) {
        return Err(Error::Infeasible("initial point violates the constraints".into()));
    }
    let lipschitz = match cfg.lipschitz_override {
        Some(l) => l,
        None => lipschitz_constant(data)? * LIPSCHITZ_SAFETY,
    };

    let mut current = Weights(init.to_vec());
    let mut f_current = half_sq_error(data, &current);
    let mut history = vec![2.0 * f_current];
    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let next = dfo_step(data, spec, &current, lipschitz)?;
        let f_next = half_sq_error(data, &next);
        let improvement = f_current - f_next;
        let scale = if cfg.relative { f_current.abs().max(f64::MIN_POSITIVE) } else { 1.0 };
        // Converged; a candidate improving by less than epsilon is dropped.
        if improvement / scale < cfg.epsilon {
            status = SolveStatus::Heuristic;
            break;
        }
        current = next;
        f_current = f_next;
        history.push(2.0 * f_current);
    }

    let report = SolveReport {
        objective: 2.0 * f_current,
        status,
        gap: None,
        iterations,
        elapsed: start.elapsed().as_secs_f64(),
    };
    Ok(DfoRun { weights: current, report, history })
}

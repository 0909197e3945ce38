//! Python bindings. Matrices are passed as lists of rows.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sparsum::dfo::DfoConfig;
use sparsum::mio::{big_m_from_dfo, BigM, BnbConfig};
use sparsum::tracker::{IndexDataset, TrackOptions};
use sparsum::{ConstraintSpec, RegressionData, Weights};

fn err(e: sparsum::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spec(k: usize, s: f64) -> PyResult<ConstraintSpec> {
    ConstraintSpec::new(k, s).map_err(err)
}

fn data(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<RegressionData> {
    RegressionData::from_rows(&x, &y).map_err(err)
}

#[pyclass(name = "SolveReport", frozen, get_all)]
pub struct PySolveReport {
    /// Squared residual norm of the returned weights.
    objective: f64,
    status: String,
    gap: Option<f64>,
    iterations: usize,
    elapsed: f64,
}

#[pymethods]
impl PySolveReport {
    fn __repr__(&self) -> String {
        format!(
            "SolveReport(objective={}, status='{}', gap={:?}, iterations={})",
            self.objective, self.status, self.gap, self.iterations
        )
    }
}

impl From<sparsum::SolveReport> for PySolveReport {
    fn from(r: sparsum::SolveReport) -> Self {
        Self {
            objective: r.objective,
            status: format!("{:?}", r.status),
            gap: r.gap,
            iterations: r.iterations,
            elapsed: r.elapsed,
        }
    }
}

type Solved = (Vec<f64>, PySolveReport);

fn solved((w, r): (Weights, sparsum::SolveReport)) -> Solved {
    (w.into_inner(), r.into())
}

/// Exact minimizer of `||eta - b||^2` under the unit-sum, cardinality and
/// negative-mass constraints.
#[pyfunction]
#[pyo3(signature = (eta, k, s=0.0))]
fn solve_orthogonal(eta: Vec<f64>, k: usize, s: f64) -> PyResult<Solved> {
    sparsum::ortho::solve_orthogonal(&eta, &spec(k, s)?).map(solved).map_err(err)
}

/// Euclidean projection onto the feasible set.
#[pyfunction]
#[pyo3(signature = (point, k, s=0.0))]
fn project(point: Vec<f64>, k: usize, s: f64) -> PyResult<Vec<f64>> {
    sparsum::ortho::project(&point, &spec(k, s)?).map(Weights::into_inner).map_err(err)
}

/// Fewest nonzeros an optimal solution can have for scores `eta`, over all
/// negative-mass budgets.
#[pyfunction]
fn min_nonzeros(eta: Vec<f64>) -> PyResult<usize> {
    let scores = sparsum::ortho::sort_scores(&eta).map_err(err)?;
    Ok(sparsum::ortho::min_nonzeros(&scores))
}

#[pyfunction]
fn linear_spacing_bound(delta: f64) -> PyResult<usize> {
    sparsum::ortho::linear_spacing_bound(delta).map_err(err)
}

/// `||y - X w||^2`.
#[pyfunction]
fn objective(x: Vec<Vec<f64>>, y: Vec<f64>, w: Vec<f64>) -> PyResult<f64> {
    sparsum::objective(&data(x, y)?, &w).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, y, k, s=0.0))]
fn forward_stepwise(x: Vec<Vec<f64>>, y: Vec<f64>, k: usize, s: f64) -> PyResult<Vec<f64>> {
    sparsum::l1path::forward_stepwise(&data(x, y)?, &spec(k, s)?)
        .map(Weights::into_inner)
        .map_err(err)
}

/// Projected-gradient descent; starts from forward stepwise when `init` is
/// omitted.
#[pyfunction]
#[pyo3(signature = (x, y, k, s=0.0, init=None, epsilon=1e-8, max_iterations=10_000))]
fn dfo_solve(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    k: usize,
    s: f64,
    init: Option<Vec<f64>>,
    epsilon: f64,
    max_iterations: usize,
) -> PyResult<Solved> {
    let d = data(x, y)?;
    let sp = spec(k, s)?;
    let start = match init {
        Some(w) => Weights(w),
        None => sparsum::l1path::forward_stepwise(&d, &sp).map_err(err)?,
    };
    let cfg = DfoConfig { epsilon, max_iterations, ..DfoConfig::default() };
    sparsum::dfo::dfo_solve(&d, &sp, &start, &cfg).map(solved).map_err(err)
}

/// Global minimizer without the cardinality constraint.
#[pyfunction]
#[pyo3(signature = (x, y, s=0.0, tol=1e-9))]
fn solve_l1(x: Vec<Vec<f64>>, y: Vec<f64>, s: f64, tol: f64) -> PyResult<Solved> {
    sparsum::l1path::solve_l1_unit_sum(&data(x, y)?, s, tol).map(solved).map_err(err)
}

fn mio_model(
    d: &RegressionData,
    sp: &ConstraintSpec,
    safe_bigm: bool,
    lambda: f64,
) -> PyResult<(sparsum::mio::MiqpModel, Weights)> {
    let start = sparsum::l1path::forward_stepwise(d, sp).map_err(err)?;
    let (w, _) = sparsum::dfo::dfo_solve(d, sp, &start, &DfoConfig::default()).map_err(err)?;
    let bigm = if safe_bigm { BigM::natural(sp) } else { big_m_from_dfo(&w, sp) };
    let model = sparsum::mio::build_model(d, sp, bigm, lambda).map_err(err)?;
    Ok((model, w))
}

/// Branch and bound on the mixed-integer model, warm-started by descent.
#[pyfunction]
#[pyo3(signature = (x, y, k, s=0.0, time_limit=600.0, gap=1e-6, safe_bigm=false, lambda_=0.0, workers=1))]
#[allow(clippy::too_many_arguments)]
fn mio_solve(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    k: usize,
    s: f64,
    time_limit: f64,
    gap: f64,
    safe_bigm: bool,
    lambda_: f64,
    workers: usize,
) -> PyResult<Solved> {
    let d = data(x, y)?;
    let sp = spec(k, s)?;
    py.detach(|| {
        let (model, incumbent) = mio_model(&d, &sp, safe_bigm, lambda_)?;
        let cfg = BnbConfig { time_limit, gap_tol: gap, workers, ..BnbConfig::default() };
        sparsum::mio::branch_and_bound(&model, &d, &cfg, &incumbent).map(solved).map_err(err)
    })
}

/// The mixed-integer model in LP format.
#[pyfunction]
#[pyo3(signature = (x, y, k, s=0.0, safe_bigm=false, lambda_=0.0))]
fn export_mio(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    k: usize,
    s: f64,
    safe_bigm: bool,
    lambda_: f64,
) -> PyResult<String> {
    let d = data(x, y)?;
    let (model, _) = mio_model(&d, &spec(k, s)?, safe_bigm, lambda_)?;
    Ok(sparsum::mio::export_model(&model))
}

/// `(b - b*)' S (b - b*) / (b*' S b*)`.
#[pyfunction]
fn relative_risk(beta_hat: Vec<f64>, beta_star: Vec<f64>, sigma: Vec<Vec<f64>>) -> PyResult<f64> {
    let m = sigma.len();
    if sigma.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("sigma must be square"));
    }
    let s = DMatrix::from_fn(m, m, |i, j| sigma[i][j]);
    sparsum::experiments::relative_risk(&beta_hat, &beta_star, &s).map_err(err)
}

#[pyclass(name = "TrackResult", frozen, get_all)]
pub struct PyTrackResult {
    k: usize,
    nonzeros: usize,
    r2_oos: f64,
    train_objective: f64,
    status: String,
    gap: Option<f64>,
    non_unique: bool,
    weights: Vec<f64>,
}

#[pymethods]
impl PyTrackResult {
    fn __repr__(&self) -> String {
        format!(
            "TrackResult(k={}, nonzeros={}, r2_oos={:.4}, status='{}')",
            self.k, self.nonzeros, self.r2_oos, self.status
        )
    }
}

/// Index tracking from file contents (`fmt` is "orlib" or "csv").
#[pyfunction]
#[pyo3(signature = (text, ks, s=0.0, fmt="orlib", split=None, time_limit=600.0, safe_bigm=false))]
#[allow(clippy::too_many_arguments)]
fn track(
    py: Python<'_>,
    text: &str,
    ks: Vec<usize>,
    s: f64,
    fmt: &str,
    split: Option<usize>,
    time_limit: f64,
    safe_bigm: bool,
) -> PyResult<Vec<PyTrackResult>> {
    let ds = match fmt {
        "orlib" => IndexDataset::from_orlib(text, "python"),
        "csv" => IndexDataset::from_csv(text, "python"),
        other => return Err(PyValueError::new_err(format!("unknown format {other:?}"))),
    }
    .map_err(err)?;
    let opts = TrackOptions {
        s,
        split,
        safe_bigm,
        bnb: BnbConfig { time_limit, ..BnbConfig::default() },
        ..TrackOptions::default()
    };
    let results = py.detach(|| sparsum::tracker::track_many(&ds, &ks, &opts)).map_err(err)?;
    Ok(results
        .into_iter()
        .map(|r| PyTrackResult {
            k: r.k,
            nonzeros: r.nonzeros,
            r2_oos: r.r2_oos,
            train_objective: r.train_objective,
            status: format!("{:?}", r.status),
            gap: r.gap,
            non_unique: r.non_unique,
            weights: r.weights.into_inner(),
        })
        .collect())
}

#[pymodule]
#[pyo3(name = "sparsum")]
fn sparsum_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySolveReport>()?;
    m.add_class::<PyTrackResult>()?;
    m.add_function(wrap_pyfunction!(solve_orthogonal, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(min_nonzeros, m)?)?;
    m.add_function(wrap_pyfunction!(linear_spacing_bound, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(forward_stepwise, m)?)?;
    m.add_function(wrap_pyfunction!(dfo_solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_l1, m)?)?;
    m.add_function(wrap_pyfunction!(mio_solve, m)?)?;
    m.add_function(wrap_pyfunction!(export_mio, m)?)?;
    m.add_function(wrap_pyfunction!(relative_risk, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    Ok(())
}

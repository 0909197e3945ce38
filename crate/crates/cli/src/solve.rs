use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use sparsum::dfo::{dfo_solve, DfoConfig};
use sparsum::l1path::forward_stepwise;
use sparsum::mio::{big_m_from_dfo, branch_and_bound, build_model, export_model, BigM, BnbConfig};
use sparsum::ortho::{project, solve_orthogonal};
use sparsum::{objective, ConstraintSpec, RegressionData, SolveReport, Weights, ZERO_TOL};

use crate::io::{read_matrix, read_vector, write_output};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Exact solve for an orthogonal design.
    Ortho,
    /// Projected-gradient descent.
    Dfo,
    /// Branch and bound on the mixed-integer model.
    Mio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    /// Forward stepwise selection.
    Fss,
    /// Projection of the equal-weight portfolio.
    Uniform,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Design matrix CSV (t rows, m columns).
    #[arg(long)]
    x: Option<PathBuf>,
    /// Response CSV (t values); the score vector itself with --orthogonal and no --x.
    #[arg(long)]
    y: PathBuf,
    /// Maximum number of nonzero weights.
    #[arg(long)]
    k: usize,
    /// Maximum total negative weight.
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    #[arg(long, value_enum, default_value_t = Method::Dfo)]
    method: Method,
    /// Treat the design as orthogonal; same as --method ortho.
    #[arg(long)]
    orthogonal: bool,
    /// Branch-and-bound wall-clock limit in seconds.
    #[arg(long, default_value_t = sparsum::mio::DEFAULT_TIME_LIMIT)]
    time_limit: f64,
    /// Absolute optimality tolerance for branch and bound.
    #[arg(long, default_value_t = 1e-6)]
    gap: f64,
    /// Starting point for descent.
    #[arg(long, value_enum, default_value_t = Init::Fss)]
    init: Init,
    /// Descent stops once an iteration improves the objective by less than this.
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    /// Use -s and 1+s as big-M bounds.
    #[arg(long)]
    safe_bigm: bool,
    /// Ridge weight added to the mixed-integer objective.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Write the mixed-integer model in LP format to this path and stop.
    #[arg(long)]
    export_mio: Option<PathBuf>,
    /// Branch-and-bound worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct SolveOutput {
    pub command: &'static str,
    pub method: Method,
    pub k: usize,
    pub s: f64,
    pub n_vars: usize,
    pub weights: Weights,
    pub nonzeros: usize,
    pub negative_sum: f64,
    pub big_m: Option<BigM>,
    pub report: SolveReport,
}

fn orthogonal_scores(args: &SolveArgs) -> Result<(Vec<f64>, Option<RegressionData>), CliError> {
    let y = read_vector(&args.y)?;
    let Some(xp) = &args.x else {
        return Ok((y.iter().copied().collect(), None));
    };
    let data = RegressionData::new(read_matrix(xp)?, y)?;
    let x = data.x();
    let gram = x.tr_mul(x);
    let m = gram.nrows();
    let off = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    if off > 1e-8 {
        return Err(CliError::user(format!(
            "design is not orthogonal: max |X'X - I| entry is {off:.3e}"
        )));
    }
    Ok((x.tr_mul(data.y()).iter().copied().collect(), Some(data)))
}

fn start_point(
    data: &RegressionData,
    spec: &ConstraintSpec,
    init: Init,
) -> Result<Weights, CliError> {
    Ok(match init {
        Init::Fss => forward_stepwise(data, spec)?,
        Init::Uniform => {
            let m = data.n_vars();
            project(&vec![1.0 / m as f64; m], &spec.clamp_k(m))?
        }
    })
}

pub fn solve(args: &SolveArgs) -> Result<Option<SolveOutput>, CliError> {
    let method = if args.orthogonal { Method::Ortho } else { args.method };
    let spec = ConstraintSpec::new(args.k, args.s)?;
    if method == Method::Ortho {
        let (eta, data) = orthogonal_scores(args)?;
        let (w, mut report) = solve_orthogonal(&eta, &spec)?;
        if let Some(d) = &data {
            report.objective = objective(d, &w)?;
        }
        return Ok(Some(output(method, &spec, eta.len(), w, None, report)));
    }

    let xp = args
        .x
        .as_ref()
        .ok_or_else(|| CliError::user("--x is required unless the design is orthogonal"))?;
    let data = RegressionData::new(read_matrix(xp)?, read_vector(&args.y)?)?;
    let m = data.n_vars();
    let dfo_cfg = DfoConfig { epsilon: args.epsilon, ..DfoConfig::default() };
    let init = start_point(&data, &spec, args.init)?;
    let (dfo_w, dfo_report) = dfo_solve(&data, &spec, &init, &dfo_cfg)?;
    if method == Method::Dfo {
        return Ok(Some(output(method, &spec, m, dfo_w, None, dfo_report)));
    }

    let bigm = if args.safe_bigm { BigM::natural(&spec) } else { big_m_from_dfo(&dfo_w, &spec) };
    let model = build_model(&data, &spec, bigm, args.lambda)?;
    if let Some(path) = &args.export_mio {
        write_output(Some(path), &export_model(&model))?;
        return Ok(None);
    }
    let cfg = BnbConfig {
        time_limit: args.time_limit,
        gap_tol: args.gap,
        workers: args.workers,
        ..BnbConfig::default()
    };
    let (w, report) = branch_and_bound(&model, &data, &cfg, &dfo_w)?;
    Ok(Some(output(method, &spec, m, w, Some(bigm), report)))
}

fn output(
    method: Method,
    spec: &ConstraintSpec,
    m: usize,
    weights: Weights,
    big_m: Option<BigM>,
    report: SolveReport,
) -> SolveOutput {
    SolveOutput {
        command: "solve",
        method,
        k: spec.k(),
        s: spec.s(),
        n_vars: m,
        nonzeros: weights.iter().filter(|v| v.abs() > ZERO_TOL).count(),
        negative_sum: weights.negative_sum(),
        weights,
        big_m,
        report,
    }
}

pub fn run(args: SolveArgs) -> Result<(), CliError> {
    if args.export_mio.is_some() && !matches!(args.method, Method::Mio) {
        return Err(CliError::user("--export-mio requires --method mio"));
    }
    if let Some(out) = solve(&args)? {
        let text = serde_json::to_string_pretty(&out)? + "\n";
        write_output(args.out.as_deref(), &text)?;
    }
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use sparsum::dfo::dfo_solve;
use sparsum::l1path::forward_stepwise;
use sparsum::mio::{big_m_from_dfo, build_model, export_model, BigM, BnbConfig};
use sparsum::tracker::{split_halves, track_many, IndexDataset, TrackOptions, TrackResult};
use sparsum::ConstraintSpec;

use crate::io::write_output;
use crate::{with_jobs, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// OR-library price file.
    Orlib,
    /// Returns CSV: index in the first column, constituents after it.
    Csv,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Price file (OR-library) or returns CSV.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated list of cardinalities.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    /// Maximum total short position.
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// First row of the test half; defaults to the midpoint.
    #[arg(long)]
    split: Option<usize>,
    /// Return rows to discard before splitting, as `[label:]t1,t2,...`.
    #[arg(long)]
    drop_outliers: Option<String>,
    /// Write the mixed-integer model for each k in LP format and stop.
    /// With several k values, `_k<k>` is inserted before the extension.
    #[arg(long)]
    export_mio: Option<PathBuf>,
    /// JSON destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV file receiving one row of weights per k.
    #[arg(long)]
    weights_csv: Option<PathBuf>,
    #[arg(long, default_value_t = sparsum::mio::DEFAULT_TIME_LIMIT)]
    time_limit: f64,
    #[arg(long, default_value_t = 1e-6)]
    gap: f64,
    #[arg(long)]
    safe_bigm: bool,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Cardinalities solved concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Branch-and-bound worker threads per solve.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Serialize)]
struct TrackOutput {
    command: &'static str,
    source_id: String,
    s: f64,
    n_assets: usize,
    n_obs: usize,
    results: Vec<TrackResult>,
}

/// Parses `[label:]t1,t2,...`.
pub fn parse_drop(spec: &str) -> Result<Vec<usize>, CliError> {
    let list = spec.rsplit_once(':').map_or(spec, |(_, rows)| rows);
    list.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| CliError::user(format!("--drop-outliers: bad row index {t:?}")))
        })
        .collect()
}

fn load(args: &TrackArgs) -> Result<IndexDataset, CliError> {
    let raw = fs::read_to_string(&args.data)
        .map_err(|e| CliError::user(format!("cannot read {}: {e}", args.data.display())))?;
    let source = args
        .data
        .file_stem()
        .map_or_else(|| args.data.display().to_string(), |s| s.to_string_lossy().into_owned());
    let format =
        args.format.unwrap_or_else(|| match args.data.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Orlib,
        });
    let ds = match format {
        Format::Orlib => IndexDataset::from_orlib(&raw, &source),
        Format::Csv => IndexDataset::from_csv(&raw, &source),
    }
    .map_err(|e| CliError::user(format!("{}: {e}", args.data.display())))?;
    match &args.drop_outliers {
        Some(spec) => Ok(ds.drop_rows(&parse_drop(spec)?)?),
        None => Ok(ds),
    }
}

fn lp_path(base: &Path, k: usize, many: bool) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = match base.extension() {
        Some(ext) => format!("{stem}_k{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_k{k}"),
    };
    base.with_file_name(name)
}

fn export(
    ds: &IndexDataset,
    args: &TrackArgs,
    opts: &TrackOptions,
    base: &Path,
) -> Result<(), CliError> {
    let (train, _) = split_halves(ds, opts.split)?;
    let data = train.to_regression()?;
    for &k in &args.k {
        if k < 1 || k > ds.n_assets() {
            return Err(CliError::user(format!("k must lie in 1..={}", ds.n_assets())));
        }
        let spec = ConstraintSpec::new(k, opts.s)?;
        let start = forward_stepwise(&data, &spec)?;
        let (w, _) = dfo_solve(&data, &spec, &start, &opts.dfo)?;
        let bigm = if opts.safe_bigm { BigM::natural(&spec) } else { big_m_from_dfo(&w, &spec) };
        let model = build_model(&data, &spec, bigm, opts.lambda)?;
        write_output(Some(&lp_path(base, k, args.k.len() > 1)), &export_model(&model))?;
    }
    Ok(())
}

fn weights_csv(results: &[TrackResult], m: usize) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k".to_string()];
    header.extend((1..=m).map(|i| format!("w{i}")));
    w.write_record(&header).map_err(|e| CliError::internal(format!("csv: {e}")))?;
    for r in results {
        let mut row = vec![r.k.to_string()];
        row.extend(r.weights.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| CliError::internal(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::internal(format!("csv: {e}")))
}

pub fn run(args: TrackArgs) -> Result<(), CliError> {
    let ds = load(&args)?;
    let opts = TrackOptions {
        s: args.s,
        split: args.split,
        bnb: BnbConfig {
            time_limit: args.time_limit,
            gap_tol: args.gap,
            workers: args.workers,
            ..BnbConfig::default()
        },
        safe_bigm: args.safe_bigm,
        lambda: args.lambda,
        ..TrackOptions::default()
    };
    if let Some(base) = &args.export_mio {
        return export(&ds, &args, &opts, base);
    }
    let results = with_jobs(args.jobs, || track_many(&ds, &args.k, &opts))??;
    if let Some(path) = &args.weights_csv {
        write_output(Some(path), &weights_csv(&results, ds.n_assets())?)?;
    }
    let out = TrackOutput {
        command: "track",
        source_id: ds.source_id.clone(),
        s: args.s,
        n_assets: ds.n_assets(),
        n_obs: ds.n_obs(),
        results,
    };
    write_output(args.out.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"))
}

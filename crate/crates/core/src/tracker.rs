//! Index tracking: price-file ingestion, returns, train/test split, the
//! FSS, descent and branch-and-bound pipeline, and out-of-sample R^2.
//!
//! OR-library `indtrack` files are read as a whitespace-separated stream:
//! a header `N T`, then `T + 1` index prices, then `T + 1` prices for each of
//! the `N` constituents in turn.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dfo::{dfo_solve, DfoConfig};
use crate::error::{Error, Result};
use crate::l1path::{forward_stepwise, solve_l1_unit_sum};
use crate::mio::{big_m_from_dfo, branch_and_bound, build_model, BigM, BnbConfig};
use crate::problem::{ConstraintSpec, RegressionData, SolveStatus, Weights, ZERO_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrlibError {
    #[error("malformed header at byte {offset}: {message}")]
    Header { offset: usize, message: String },
    #[error("non-numeric token {token:?} at byte {offset}")]
    NonNumeric { token: String, offset: usize },
    #[error("token count mismatch: header declares {expected} prices, found {actual}")]
    Count { expected: usize, actual: usize },
}

/// Prices at `T + 1` dates for the index and `N` constituents.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub index: DVector<f64>,
    /// `(T + 1) x N`, one column per constituent.
    pub constituents: DMatrix<f64>,
}

fn tokens(raw: &str) -> impl Iterator<Item = (usize, &str)> {
    let base = raw.as_ptr() as usize;
    raw.split_ascii_whitespace().map(move |t| (t.as_ptr() as usize - base, t))
}

pub fn parse_orlib(raw: &str) -> std::result::Result<PricePanel, OrlibError> {
    let mut toks = tokens(raw);
    let mut count = |what: &str| -> std::result::Result<usize, OrlibError> {
        let (offset, tok) = toks.next().ok_or_else(|| OrlibError::Header {
            offset: raw.len(),
            message: format!("missing {what}"),
        })?;
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(OrlibError::Header {
                offset,
                message: format!("{what} must be a positive integer, got {tok:?}"),
            }),
        }
    };
    let n = count("constituent count")?;
    let t = count("period count")?;

    let expected = (n + 1) * (t + 1);
    let mut values = Vec::with_capacity(expected);
    for (offset, tok) in toks {
        let v: f64 = tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| OrlibError::NonNumeric { token: tok.to_string(), offset })?;
        values.push(v);
    }
    if values.len() != expected {
        return Err(OrlibError::Count { expected, actual: values.len() });
    }
    let rows = t + 1;
    Ok(PricePanel {
        index: DVector::from_column_slice(&values[..rows]),
        constituents: DMatrix::from_column_slice(rows, n, &values[rows..]),
    })
}

/// Returns of an index (response) and its constituents (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct IndexDataset {
    pub index_returns: DVector<f64>,
    pub constituent_returns: DMatrix<f64>,
    pub source_id: String,
}

/// Simple returns `P_t / P_{t-1} - 1` for the index and every constituent.
pub fn prices_to_returns(prices: &PricePanel, source_id: &str) -> Result<IndexDataset> {
    let rows = prices.index.len();
    if prices.constituents.nrows() != rows {
        return Err(Error::dim("index and constituent price series differ in length"));
    }
    if rows < 2 {
        return Err(Error::invalid("at least two prices are needed"));
    }
    if prices.index.iter().chain(prices.constituents.iter()).any(|&p| !(p > 0.0)) {
        return Err(Error::invalid("prices must be strictly positive"));
    }
    let ret = |a: f64, b: f64| b / a - 1.0;
    let index_returns =
        DVector::from_fn(rows - 1, |t, _| ret(prices.index[t], prices.index[t + 1]));
    let c = &prices.constituents;
    let constituent_returns =
        DMatrix::from_fn(rows - 1, c.ncols(), |t, j| ret(c[(t, j)], c[(t + 1, j)]));
    Ok(IndexDataset { index_returns, constituent_returns, source_id: source_id.to_string() })
}

impl IndexDataset {
    pub fn new(
        index_returns: DVector<f64>,
        constituent_returns: DMatrix<f64>,
        source_id: &str,
    ) -> Result<Self> {
        if index_returns.len() != constituent_returns.nrows() {
            return Err(Error::dim("index and constituent returns differ in length"));
        }
        if index_returns.iter().chain(constituent_returns.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("returns must be finite"));
        }
        Ok(Self { index_returns, constituent_returns, source_id: source_id.to_string() })
    }

    /// Reads an OR-library `indtrack` price file.
    pub fn from_orlib(raw: &str, source_id: &str) -> Result<Self> {
        prices_to_returns(&parse_orlib(raw)?, source_id)
    }

    /// Header-less CSV of returns: the first column is the index, the rest
    /// are constituents.
    pub fn from_csv(raw: &str, source_id: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
            if row.len() < 2 {
                return Err(Error::invalid(format!(
                    "line {}: need at least two columns",
                    lineno + 1
                )));
            }
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::invalid(format!(
                        "line {}: expected {} columns, found {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::invalid("no data rows"));
        }
        let m = rows[0].len() - 1;
        let y = DVector::from_fn(rows.len(), |t, _| rows[t][0]);
        let x = DMatrix::from_fn(rows.len(), m, |t, j| rows[t][j + 1]);
        Self::new(y, x, source_id)
    }

    pub fn n_obs(&self) -> usize {
        self.index_returns.len()
    }

    pub fn n_assets(&self) -> usize {
        self.constituent_returns.ncols()
    }

    pub fn rows(&self, start: usize, end: usize) -> Self {
        Self {
            index_returns: self.index_returns.rows(start, end - start).into_owned(),
            constituent_returns: self.constituent_returns.rows(start, end - start).into_owned(),
            source_id: self.source_id.clone(),
        }
    }

    /// Removes the listed return rows (zero-based), e.g. known outliers.
    pub fn drop_rows(&self, drop: &[usize]) -> Result<Self> {
        if let Some(&bad) = drop.iter().find(|&&r| r >= self.n_obs()) {
            return Err(Error::invalid(format!("row {bad} is out of range")));
        }
        let keep: Vec<usize> = (0..self.n_obs()).filter(|r| !drop.contains(r)).collect();
        Ok(Self {
            index_returns: self.index_returns.select_rows(&keep),
            constituent_returns: self.constituent_returns.select_rows(&keep),
            source_id: self.source_id.clone(),
        })
    }

    pub fn to_regression(&self) -> Result<RegressionData> {
        RegressionData::new(self.constituent_returns.clone(), self.index_returns.clone())
    }
}

/// Splits at `split` (default: the midpoint of an even-length series).
pub fn split_halves(
    ds: &IndexDataset,
    split: Option<usize>,
) -> Result<(IndexDataset, IndexDataset)> {
    let n = ds.n_obs();
    let cut = match split {
        Some(c) => c,
        None if n.is_multiple_of(2) => n / 2,
        None => return Err(Error::invalid("odd-length series needs an explicit split point")),
    };
    if cut == 0 || cut >= n {
        return Err(Error::invalid(format!("series of {n} rows is too short to split at {cut}")));
    }
    Ok((ds.rows(0, cut), ds.rows(cut, n)))
}

/// `1 - SSE / SST`, with `SST` taken about the mean index return of `test`.
pub fn out_of_sample_r2(test: &IndexDataset, w: &[f64]) -> Result<f64> {
    if w.len() != test.n_assets() {
        return Err(Error::dim("weights do not match the number of constituents"));
    }
    let y = &test.index_returns;
    let fitted = &test.constituent_returns * DVector::from_column_slice(w);
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::invalid("test index returns have zero variance"));
    }
    let sse: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOptions {
    pub s: f64,
    /// Row at which the test half starts; `None` splits an even series in two.
    pub split: Option<usize>,
    pub dfo: DfoConfig,
    pub bnb: BnbConfig,
    /// Use `-s` and `1 + s` as big-M bounds instead of the descent-based ones.
    pub safe_bigm: bool,
    pub lambda: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            s: 0.0,
            split: None,
            dfo: DfoConfig { epsilon: 1e-12, ..DfoConfig::default() },
            bnb: BnbConfig::default(),
            safe_bigm: false,
            lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub k: usize,
    pub nonzeros: usize,
    pub r2_oos: f64,
    /// In-sample squared tracking error on the training half.
    pub train_objective: f64,
    pub status: SolveStatus,
    pub gap: Option<f64>,
    /// Set when `m > t` and the `k = m` minimizer uses more than `t` assets.
    pub non_unique: bool,
    pub weights: Weights,
}

/// Builds a `k`-asset portfolio on the training half and scores it on the
/// test half.
pub fn track(ds: &IndexDataset, k: usize, opts: &TrackOptions) -> Result<TrackResult> {
    let (train, test) = split_halves(ds, opts.split)?;
    track_split(&train, &test, k, opts)
}

pub fn track_split(
    train: &IndexDataset,
    test: &IndexDataset,
    k: usize,
    opts: &TrackOptions,
) -> Result<TrackResult> {
    let m = train.n_assets();
    if k < 1 || k > m {
        return Err(Error::invalid(format!("k must lie in 1..={m}")));
    }
    let data = train.to_regression()?;
    let spec = ConstraintSpec::new(k, opts.s)?;
    let start = forward_stepwise(&data, &spec)?;
    let (dfo_w, _) = dfo_solve(&data, &spec, &start, &opts.dfo)?;
    let bigm = if opts.safe_bigm { BigM::natural(&spec) } else { big_m_from_dfo(&dfo_w, &spec) };
    let model = build_model(&data, &spec, bigm, opts.lambda)?;
    let (weights, report) = branch_and_bound(&model, &data, &opts.bnb, &dfo_w)?;

    let non_unique = if m > data.n_obs() {
        let (full, _) = solve_l1_unit_sum(&data, opts.s, 1e-10)?;
        full.iter().filter(|v| v.abs() > ZERO_TOL).count() > data.n_obs()
    } else {
        false
    };
    Ok(TrackResult {
        k,
        nonzeros: weights.iter().filter(|v| v.abs() > ZERO_TOL).count(),
        r2_oos: out_of_sample_r2(test, &weights)?,
        train_objective: report.objective,
        status: report.status,
        gap: report.gap,
        non_unique,
        weights,
    })
}

/// [`track`] for several cardinalities, run concurrently.
pub fn track_many(
    ds: &IndexDataset,
    ks: &[usize],
    opts: &TrackOptions,
) -> Result<Vec<TrackResult>> {
    let (train, test) = split_halves(ds, opts.split)?;
    ks.par_iter().map(|&k| track_split(&train, &test, k, opts)).collect()
}

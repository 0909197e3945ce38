//! The convex `k = m` problem (unit sum plus `l1` budget) and the
//! forward-stepwise initializer built on it.
//!
//! The convex solver is accelerated projected gradient with adaptive restart.
//! Without box bounds the projection is the exact orthogonal solver with
//! `k = m`; with bounds (branch-and-bound nodes under big-M limits) it is a
//! two-multiplier search. Termination is certified by the Frank-Wolfe duality
//! gap, so `objective - gap` is a valid lower bound on the optimum.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ortho;
use crate::problem::{ConstraintSpec, RegressionData, SolveReport, SolveStatus, Weights};
use crate::quadratic::Quadratic;

/// Per-coordinate limits `lower <= b_i <= upper`, with `lower <= 0 <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: f64,
    pub upper: f64,
}

impl BoxBounds {
    /// True when the box cannot cut anything off the set with budget `s`.
    pub fn is_redundant(&self, s: f64) -> bool {
        self.lower <= -s && self.upper >= 1.0 + s
    }
}

/// Outcome of a convex solve over a subset of columns.
#[derive(Debug, Clone)]
pub struct ConvexSolution {
    /// Weights over the solved columns, in the order they were given.
    pub weights: Vec<f64>,
    /// `||y - X b||^2`.
    pub objective: f64,
    /// Certified lower bound on the optimal objective.
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ConvexSolution {
    pub fn gap(&self) -> f64 {
        (self.objective - self.lower_bound).max(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvexSettings {
    /// Target duality gap in objective units.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for ConvexSettings {
    fn default() -> Self {
        Self { tol: 1e-9, max_iterations: 50_000 }
    }
}

/// Global minimizer of `||y - X b||^2` subject to `sum(b) = 1` and
/// `||b||_1 <= 1 + 2s`, to objective accuracy `tol`.
pub fn solve_l1_unit_sum(
    data: &RegressionData,
    s: f64,
    tol: f64,
) -> Result<(Weights, SolveReport)> {
    solve_l1_unit_sum_from(data, s, tol, None)
}

/// As [`solve_l1_unit_sum`], warm-started from `init` when given.
pub fn solve_l1_unit_sum_from(
    data: &RegressionData,
    s: f64,
    tol: f64,
    init: Option<&[f64]>,
) -> Result<(Weights, SolveReport)> {
    let start = Instant::now();
    if !(s >= 0.0) {
        return Err(Error::invalid("s must be nonnegative"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    if let Some(w) = init {
        data.check_len(w)?;
    }
    let q = Quadratic::from_data(data);
    let settings = ConvexSettings { tol, ..ConvexSettings::default() };
    let sol = solve_convex(&q, s, None, settings, init)?
        .ok_or_else(|| Error::Infeasible("empty feasible set".into()))?;
    let weights = Weights(sol.weights.clone());
    let objective = crate::problem::objective(data, &weights)?;
    let report = SolveReport {
        objective,
        status: if sol.converged { SolveStatus::Optimal } else { SolveStatus::IterationLimit },
        gap: Some(sol.gap()),
        iterations: sol.iterations,
        elapsed: start.elapsed().as_secs_f64(),
    };
    Ok((weights, report))
}

/// Convex solve restricted to `cols` (all other weights fixed at zero),
/// optionally under box bounds. Returns `None` when the restricted set is
/// empty. Weights in the result are indexed like `cols`.
pub fn solve_l1_restricted(
    data: &RegressionData,
    cols: &[usize],
    s: f64,
    bounds: Option<BoxBounds>,
    settings: ConvexSettings,
    warm: Option<&[f64]>,
) -> Result<Option<ConvexSolution>> {
    if cols.iter().any(|&c| c >= data.n_vars()) {
        return Err(Error::dim("column index out of range"));
    }
    let q = Quadratic::from_data(data).restrict(cols);
    solve_convex(&q, s, bounds, settings, warm)
}

pub(crate) fn solve_convex(
    q: &Quadratic,
    s: f64,
    bounds: Option<BoxBounds>,
    settings: ConvexSettings,
    warm: Option<&[f64]>,
) -> Result<Option<ConvexSolution>> {
    let m = q.dim();
    if m == 0 {
        return Ok(None);
    }
    let bounds = bounds.filter(|b| !b.is_redundant(s));
    let lmo_box = bounds.unwrap_or(BoxBounds { lower: -s, upper: 1.0 + s });
    if lmo_box.upper * (m as f64) < 1.0 {
        return Ok(None);
    }
    let project = |p: &[f64]| -> Result<Vec<f64>> {
        match bounds {
            None => Ok(ortho::project(p, &ConstraintSpec::new(m, s)?)?.into_inner()),
            Some(b) => Ok(project_boxed(p, s, b)),
        }
    };

    let lmo_gap = |x: &[f64]| -> f64 {
        let g = q.grad(x);
        let v = linear_minimizer(&g, s, lmo_box);
        g.iter().zip(x.iter().zip(&v)).map(|(gi, (xi, vi))| gi * (xi - vi)).sum::<f64>().max(0.0)
    };
    // The sum-constrained least-squares point is optimal whenever it is feasible.
    if let Some(x) = affine_minimizer(q) {
        let box_ok = bounds.is_none_or(|b| x.iter().all(|&v| v >= b.lower && v <= b.upper));
        let neg: f64 = x.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
        if box_ok && neg <= s {
            let f = q.value(&x);
            let lower = f - lmo_gap(&x);
            if f - lower <= settings.tol {
                return Ok(Some(ConvexSolution {
                    weights: x,
                    objective: f,
                    lower_bound: lower,
                    iterations: 0,
                    converged: true,
                }));
            }
        }
    }

    let lipschitz = q.lipschitz();
    let mut x = match warm {
        Some(w) if w.len() == m => project(w)?,
        _ => {
            let g = q.grad(&vec![0.0; m]);
            project(&g.iter().map(|v| -v / lipschitz).collect::<Vec<_>>())?
        }
    };
    let mut f_x = q.value(&x);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut best_lower = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    loop {
        if iterations % 5 == 0 {
            best_lower = best_lower.max(f_x - lmo_gap(&x));
            if f_x - best_lower <= settings.tol {
                converged = true;
                break;
            }
        }
        if iterations >= settings.max_iterations {
            break;
        }
        iterations += 1;

        let g = q.grad(&y);
        let step: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / lipschitz).collect();
        let x_new = project(&step)?;
        let f_new = q.value(&x_new);
        // Restart momentum when it points uphill.
        let uphill: f64 =
            y.iter().zip(&x_new).zip(&x).map(|((yi, xn), xo)| (yi - xn) * (xn - xo)).sum();
        if uphill > 0.0 || f_new > f_x {
            t = 1.0;
            y = x_new.clone();
        } else {
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_new;
            y = x_new.iter().zip(&x).map(|(xn, xo)| xn + beta * (xn - xo)).collect();
            t = t_new;
        }
        if f_new <= f_x {
            x = x_new;
            f_x = f_new;
        }
    }

    Ok(Some(ConvexSolution {
        weights: x,
        objective: f_x,
        lower_bound: best_lower.min(f_x),
        iterations,
        converged,
    }))
}

/// Minimizer of `b'Gb - 2c'b` subject only to `sum(b) = 1`, when `G` is
/// positive definite.
fn affine_minimizer(q: &Quadratic) -> Option<Vec<f64>> {
    let chol = q.gram.clone().cholesky()?;
    let a = chol.solve(&q.lin);
    let u = chol.solve(&nalgebra::DVector::from_element(q.dim(), 1.0));
    let denom = u.sum();
    if !(denom > 0.0) || !denom.is_finite() {
        return None;
    }
    let b = &a - &u * ((a.sum() - 1.0) / denom);
    b.iter().all(|v| v.is_finite()).then(|| b.as_slice().to_vec())
}

/// Minimizer of `g'v` over `{sum(v) = 1, sum(v^-) <= s, lower <= v <= upper}`.
///
/// Positive mass `1 + z` goes to the cheapest coordinates and negative mass
/// `z` to the most expensive ones; `z` grows while that lowers the cost.
pub(crate) fn linear_minimizer(g: &[f64], s: f64, bounds: BoxBounds) -> Vec<f64> {
    let m = g.len();
    let hi = bounds.upper;
    let neg_cap = (-bounds.lower).min(s).max(0.0);
    let mut asc: Vec<usize> = (0..m).collect();
    asc.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));

    let mut pos = vec![0.0; m];
    let mut neg = vec![0.0; m];
    let mut need: f64 = 1.0;
    let mut pi = 0;
    while need > 0.0 && pi < m {
        let take = need.min(hi);
        pos[asc[pi]] += take;
        need -= take;
        if pos[asc[pi]] >= hi {
            pi += 1;
        }
    }

    let mut z = 0.0;
    let mut ni = m; // walks asc from the top
    while z < s && pi < m && ni > 0 {
        let ip = asc[pi];
        let ineg = asc[ni - 1];
        if g[ip] >= g[ineg] {
            break;
        }
        let delta = (hi - pos[ip]).min(neg_cap - neg[ineg]).min(s - z);
        if delta <= 0.0 {
            if hi - pos[ip] <= 0.0 {
                pi += 1;
            }
            if neg_cap - neg[ineg] <= 0.0 {
                ni -= 1;
            }
            if s - z <= 0.0 {
                break;
            }
            continue;
        }
        pos[ip] += delta;
        neg[ineg] += delta;
        z += delta;
        if pos[ip] >= hi {
            pi += 1;
        }
        if neg[ineg] >= neg_cap {
            ni -= 1;
        }
    }
    pos.iter().zip(&neg).map(|(a, b)| a - b).collect()
}

/// Euclidean projection onto `{sum(b) = 1, sum(b^-) <= s, lower <= b <= upper}`.
///
/// The minimizer has the form `b_i = clamp(h(eta_i - tau), lower, upper)`
/// where `h` soft-thresholds the negative part by `mu`; `tau` is found exactly
/// on its piecewise-linear sum and `mu` by bisection.
pub(crate) fn project_boxed(eta: &[f64], s: f64, bounds: BoxBounds) -> Vec<f64> {
    let lower = if s <= 0.0 { 0.0 } else { bounds.lower.max(-s) };
    let upper = bounds.upper;
    let eval = |tau: f64, mu: f64, out: &mut [f64]| {
        for (o, &e) in out.iter_mut().zip(eta) {
            let x = e - tau;
            let h = if x > 0.0 {
                x
            } else if x >= -mu {
                0.0
            } else {
                x + mu
            };
            *o = h.clamp(lower, upper);
        }
    };
    let mut buf = vec![0.0; eta.len()];
    let solve_tau = |mu: f64, buf: &mut Vec<f64>| -> f64 {
        // Breakpoints of the piecewise-linear, nonincreasing sum in tau.
        let mut knots: Vec<f64> = Vec::with_capacity(4 * eta.len());
        for &e in eta {
            knots.push(e - upper);
            knots.push(e);
            knots.push(e + mu);
            knots.push(e + mu - lower);
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let sum_at = |tau: f64, buf: &mut Vec<f64>| {
            eval(tau, mu, buf);
            buf.iter().sum::<f64>()
        };
        // sum(knots[0]) = m * upper >= 1 and sum(last) = m * lower <= 0 < 1.
        let (mut lo, mut hi) = (0, knots.len() - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if sum_at(knots[mid], buf) >= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (ta, tb) = (knots[lo], knots[hi]);
        let (sa, sb) = (sum_at(ta, buf), sum_at(tb, buf));
        if sa == sb {
            ta
        } else {
            ta + (sa - 1.0) * (tb - ta) / (sa - sb)
        }
    };
    let neg_mass = |b: &[f64]| -> f64 { b.iter().filter(|&&v| v < 0.0).map(|v| -v).sum() };

    let tau = solve_tau(0.0, &mut buf);
    eval(tau, 0.0, &mut buf);
    if neg_mass(&buf) <= s {
        return buf;
    }
    let spread = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - eta.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut mu_lo, mut mu_hi) = (0.0, spread + upper - lower + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (mu_lo + mu_hi);
        if mid <= mu_lo || mid >= mu_hi {
            break;
        }
        let tau = solve_tau(mid, &mut buf);
        eval(tau, mid, &mut buf);
        if neg_mass(&buf) > s {
            mu_lo = mid;
        } else {
            mu_hi = mid;
        }
    }
    let tau = solve_tau(mu_hi, &mut buf);
    eval(tau, mu_hi, &mut buf);
    buf
}

/// Greedy forward selection: grow the support one column at a time, fitting
/// the convex problem with budget `s` on each candidate support, until `k`
/// columns are used or no candidate lowers the objective.
pub fn forward_stepwise(data: &RegressionData, spec: &ConstraintSpec) -> Result<Weights> {
    let path = forward_stepwise_path(data, spec.s(), spec.k())?;
    Ok(path.into_iter().last().expect("path has at least one entry"))
}

/// Forward-stepwise solutions for every cardinality `1..=k_max`. Once the
/// greedy search stops improving, later entries repeat the last solution.
pub fn forward_stepwise_path(data: &RegressionData, s: f64, k_max: usize) -> Result<Vec<Weights>> {
    if k_max < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(s >= 0.0) {
        return Err(Error::invalid("s must be nonnegative"));
    }
    let m = data.n_vars();
    let q = Quadratic::from_data(data);
    let settings = ConvexSettings { tol: 1e-8 * q.yy.max(1.0), max_iterations: 20_000 };

    // Best single column: b = e_j.
    let first = (0..m)
        .map(|j| (q.gram[(j, j)] - 2.0 * q.lin[j] + q.yy, j))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, j)| j)
        .expect("at least one column");
    let mut support = vec![first];
    let mut coefs = vec![1.0];
    let mut current = q.restrict(&support).value(&coefs);
    let mut path = vec![Weights::unit(m, first)];

    while path.len() < k_max.min(m) {
        let candidates: Vec<usize> = (0..m).filter(|j| !support.contains(j)).collect();
        let fits: Vec<Option<(f64, usize, Vec<f64>)>> = candidates
            .par_iter()
            .map(|&j| {
                let mut cols = support.clone();
                cols.push(j);
                let mut warm = coefs.clone();
                warm.push(0.0);
                let sub = q.restrict(&cols);
                solve_convex(&sub, s, None, settings, Some(&warm))
                    .ok()
                    .flatten()
                    .map(|sol| (sol.objective, j, sol.weights))
            })
            .collect();
        let best =
            fits.into_iter().flatten().min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match best {
            Some((obj, j, w)) if obj < current - 1e-12 * current.max(1.0) => {
                support.push(j);
                coefs = w;
                current = obj;
                let mut full = Weights::zeros(m);
                for (&c, &v) in support.iter().zip(&coefs) {
                    full[c] = v;
                }
                path.push(full);
            }
            _ => break,
        }
    }
    while path.len() < k_max {
        let last = path.last().cloned().expect("nonempty");
        path.push(last);
    }
    Ok(path)
}

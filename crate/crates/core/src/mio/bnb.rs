//! Depth-first branch-and-bound over the indicator variables.
//!
//! Each node fixes some indicators to zero (`Out`) or one (`In`). Its bound
//! is the certified lower bound of the convex relaxation over the columns
//! not fixed out, under the model's big-M box. A node whose relaxation uses
//! at most `k` columns (counting those fixed in) is solved exactly.

use std::sync::{Condvar, Mutex};
use std::time::Instant;

use nalgebra::DMatrix;

use super::MiqpModel;
use crate::error::{Error, Result};
use crate::l1path::{solve_convex, BoxBounds, ConvexSettings, ConvexSolution};
use crate::problem::{
    is_feasible, ConstraintSpec, RegressionData, SolveReport, SolveStatus, Weights,
    FEASIBILITY_TOL, ZERO_TOL,
};
use crate::quadratic::Quadratic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbConfig {
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    /// Absolute optimality tolerance on the objective.
    pub gap_tol: f64,
    /// Worker threads exploring the tree.
    pub workers: usize,
    pub max_relaxation_iterations: usize,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            time_limit: super::DEFAULT_TIME_LIMIT,
            gap_tol: 1e-6,
            workers: 1,
            max_relaxation_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fix {
    Free,
    In,
    Out,
}

#[derive(Debug, Clone)]
struct Node {
    fixes: Vec<Fix>,
    /// Relaxation solution over `cols`.
    cols: Vec<usize>,
    relax: ConvexSolution,
}

impl Node {
    fn bound(&self) -> f64 {
        self.relax.lower_bound
    }
}

struct Incumbent {
    weights: Vec<f64>,
    value: f64,
}

struct Shared {
    stack: Vec<Node>,
    incumbent: Incumbent,
    active: usize,
    /// Smallest bound among nodes closed without being an incumbent.
    closed_bound: f64,
    nodes: usize,
    timed_out: bool,
}

struct Ctx<'a> {
    q: Quadratic,
    spec: ConstraintSpec,
    bounds: Option<BoxBounds>,
    settings: ConvexSettings,
    gap_tol: f64,
    start: Instant,
    time_limit: f64,
    state: Mutex<Shared>,
    cv: Condvar,
    data: &'a RegressionData,
}

/// Solves `model` to global optimality (within `gap_tol`) or until the time
/// limit, starting from a feasible `incumbent`.
///
/// The returned status is `Optimal` only when the final gap is at most
/// `gap_tol`; on timeout it is `TimeLimit` with the remaining gap.
pub fn branch_and_bound(
    model: &MiqpModel,
    data: &RegressionData,
    config: &BnbConfig,
    incumbent: &[f64],
) -> Result<(Weights, SolveReport)> {
    let start = Instant::now();
    let m = data.n_vars();
    if model.n_columns() != m {
        return Err(Error::dim("model and data have different column counts"));
    }
    data.check_len(incumbent)?;
    if !(config.gap_tol >= 0.0) || !(config.time_limit > 0.0) || config.workers == 0 {
        return Err(Error::invalid(
            "time_limit must be positive, gap_tol nonnegative and workers at least one",
        ));
    }
    let spec = model.spec().clamp_k(m);
    if !is_feasible(incumbent, &spec, FEASIBILITY_TOL) {
        return Err(Error::Infeasible("branch-and-bound incumbent is infeasible".into()));
    }

    let mut q = Quadratic::from_data(data);
    if model.lambda() > 0.0 {
        q.gram += DMatrix::identity(m, m) * model.lambda();
    }
    let bigm = model.bigm();
    let bounds = BoxBounds { lower: bigm.m_minus, upper: bigm.m_plus };
    let bounds = (!bounds.is_redundant(spec.s())).then_some(bounds);
    let inc_value =
        if bigm.contains(incumbent, FEASIBILITY_TOL) { q.value(incumbent) } else { f64::INFINITY };
    let settings = ConvexSettings {
        tol: (0.1 * config.gap_tol).max(1e-12),
        max_iterations: config.max_relaxation_iterations,
    };

    let ctx = Ctx {
        q,
        spec,
        bounds,
        settings,
        gap_tol: config.gap_tol,
        start,
        time_limit: config.time_limit,
        state: Mutex::new(Shared {
            stack: Vec::new(),
            incumbent: Incumbent { weights: incumbent.to_vec(), value: inc_value },
            active: 0,
            closed_bound: f64::INFINITY,
            nodes: 0,
            timed_out: false,
        }),
        cv: Condvar::new(),
        data,
    };

    let root_fixes = vec![Fix::Free; m];
    if let Some(root) = ctx.relax(root_fixes, None)? {
        ctx.state.lock().unwrap().stack.push(root);
    }

    let results: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.workers).map(|_| scope.spawn(|| ctx.worker())).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for r in results {
        r?;
    }

    let state = ctx.state.into_inner().unwrap();
    let open_bound = state.stack.iter().map(Node::bound).fold(f64::INFINITY, f64::min);
    let lower = state.closed_bound.min(open_bound).min(state.incumbent.value);
    let gap = (state.incumbent.value - lower).max(0.0);
    let status = if state.timed_out && !state.stack.is_empty() {
        SolveStatus::TimeLimit
    } else if gap <= config.gap_tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::Heuristic
    };
    let mut weights = Weights(state.incumbent.weights);
    let mut objective = crate::problem::objective(data, &weights)?;
    // Never hand back something worse than the starting point through rounding.
    let start_objective = crate::problem::objective(data, incumbent)?;
    if start_objective <= objective && bigm.contains(incumbent, FEASIBILITY_TOL) {
        weights = Weights(incumbent.to_vec());
        objective = start_objective;
    }
    Ok((
        weights,
        SolveReport {
            objective,
            status,
            gap: Some(if gap.is_finite() { gap } else { f64::MAX }),
            iterations: state.nodes,
            elapsed: start.elapsed().as_secs_f64(),
        },
    ))
}

impl Ctx<'_> {
    fn worker(&self) -> Result<()> {
        loop {
            let node = {
                let mut st = self.state.lock().unwrap();
                loop {
                    if st.timed_out {
                        return Ok(());
                    }
                    if self.start.elapsed().as_secs_f64() > self.time_limit {
                        st.timed_out = true;
                        self.cv.notify_all();
                        return Ok(());
                    }
                    if let Some(n) = st.stack.pop() {
                        st.active += 1;
                        st.nodes += 1;
                        break n;
                    }
                    if st.active == 0 {
                        self.cv.notify_all();
                        return Ok(());
                    }
                    st = self.cv.wait(st).unwrap();
                }
            };
            let outcome = self.process(node);
            let mut st = self.state.lock().unwrap();
            st.active -= 1;
            let result = outcome.map(|out| self.merge(&mut st, out));
            self.cv.notify_all();
            result?;
        }
    }

    fn merge(&self, st: &mut Shared, out: Outcome) {
        for (weights, value) in out.candidates {
            if value < st.incumbent.value {
                st.incumbent = Incumbent { weights, value };
            }
        }
        if let Some(b) = out.closed {
            st.closed_bound = st.closed_bound.min(b);
        }
        let cutoff = st.incumbent.value - self.gap_tol;
        // Stale nodes whose bound no longer clears the cutoff are closed.
        let mut pruned = f64::INFINITY;
        st.stack.retain(|n| {
            let keep = n.bound() < cutoff;
            if !keep {
                pruned = pruned.min(n.bound());
            }
            keep
        });
        for child in out.children {
            if child.bound() < cutoff {
                st.stack.push(child);
            } else {
                pruned = pruned.min(child.bound());
            }
        }
        st.closed_bound = st.closed_bound.min(pruned);
    }

    fn cutoff(&self) -> f64 {
        self.state.lock().unwrap().incumbent.value - self.gap_tol
    }

    /// Solves the relaxation for `fixes`; `None` when the node is empty.
    fn relax(&self, fixes: Vec<Fix>, warm: Option<(&[usize], &[f64])>) -> Result<Option<Node>> {
        let k = self.spec.k();
        let n_in = fixes.iter().filter(|f| **f == Fix::In).count();
        let cols: Vec<usize> = if n_in >= k {
            (0..fixes.len()).filter(|&i| fixes[i] == Fix::In).collect()
        } else {
            (0..fixes.len()).filter(|&i| fixes[i] != Fix::Out).collect()
        };
        let warm_vec = warm.map(|(wc, wv)| {
            cols.iter()
                .map(|c| wc.iter().position(|x| x == c).map_or(0.0, |p| wv[p]))
                .collect::<Vec<f64>>()
        });
        let sub = self.q.restrict(&cols);
        let relax =
            solve_convex(&sub, self.spec.s(), self.bounds, self.settings, warm_vec.as_deref())?;
        Ok(relax.map(|relax| Node { fixes, cols, relax }))
    }

    fn process(&self, node: Node) -> Result<Outcome> {
        let mut out = Outcome::default();
        let k = self.spec.k();
        if node.bound() >= self.cutoff() {
            out.closed = Some(node.bound());
            return Ok(out);
        }
        let x = &node.relax.weights;
        let used: Vec<usize> = node
            .cols
            .iter()
            .zip(x)
            .filter(|(c, v)| v.abs() > ZERO_TOL || node.fixes[**c] == Fix::In)
            .map(|(c, _)| *c)
            .collect();
        if used.len() <= k {
            let w = self.expand(&node.cols, x);
            out.closed = Some(node.bound());
            out.candidates.push((w, node.relax.objective));
            return Ok(out);
        }

        // Rounding: keep the fixed-in columns plus the largest remaining weights.
        let mut order: Vec<usize> = (0..node.cols.len()).collect();
        order.sort_by(|&a, &b| {
            let key = |i: usize| (node.fixes[node.cols[i]] == Fix::In, x[i].abs());
            key(b).partial_cmp(&key(a)).unwrap().then(a.cmp(&b))
        });
        let mut keep: Vec<usize> = order[..k].iter().map(|&i| node.cols[i]).collect();
        keep.sort_unstable();
        let heur =
            solve_convex(&self.q.restrict(&keep), self.spec.s(), self.bounds, self.settings, None)?;
        if let Some(h) = heur {
            let w = self.expand(&keep, &h.weights);
            if is_feasible(&w, &self.spec, FEASIBILITY_TOL) {
                out.candidates.push((w, h.objective));
            }
        }

        // Branch on the undecided column with the largest relaxed weight.
        let branch = node
            .cols
            .iter()
            .zip(x)
            .filter(|(c, _)| node.fixes[**c] == Fix::Free)
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap().then(b.0.cmp(a.0)))
            .map(|(c, _)| *c);
        let Some(j) = branch else {
            out.closed = Some(node.bound());
            return Ok(out);
        };
        let warm = Some((node.cols.as_slice(), x.as_slice()));
        let mut children = Vec::with_capacity(2);
        let mut fix_in = node.fixes.clone();
        fix_in[j] = Fix::In;
        let n_in = fix_in.iter().filter(|f| **f == Fix::In).count();
        if n_in < k {
            // Same column set as the parent, so the relaxation carries over.
            children.push(Node {
                fixes: fix_in,
                cols: node.cols.clone(),
                relax: node.relax.clone(),
            });
        } else if let Some(c) = self.relax(fix_in, warm)? {
            children.push(c);
        }
        let mut fix_out = node.fixes.clone();
        fix_out[j] = Fix::Out;
        if let Some(c) = self.relax(fix_out, warm)? {
            children.push(c);
        }
        // Pushed worst first so the better bound is explored next.
        children.sort_by(|a, b| b.bound().partial_cmp(&a.bound()).unwrap());
        out.children = children;
        Ok(out)
    }

    fn expand(&self, cols: &[usize], x: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.data.n_vars()];
        for (&c, &v) in cols.iter().zip(x) {
            w[c] = if v.abs() > ZERO_TOL { v } else { 0.0 };
        }
        w
    }
}

#[derive(Default)]
struct Outcome {
    candidates: Vec<(Vec<f64>, f64)>,
    children: Vec<Node>,
    closed: Option<f64>,
}

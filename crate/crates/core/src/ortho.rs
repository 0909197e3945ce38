//! Exact solver for the orthogonal-design problem
//! `min ||eta - b||^2` over the feasible set, plus the sparsity formulas
//! derived from it.
//!
//! Everything operates on the scores sorted in descending order. A candidate
//! solution is described by a [`SupportTriple`] `(p, n, z)`: the `p` largest
//! scores carry positive mass `1 + z`, the `n` smallest carry negative mass
//! `-z`, and each block is shifted by a common constant. The solver picks the
//! best triple in `O(m log m + k)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ConstraintSpec, SolveReport, SolveStatus, Weights};

/// Scores sorted in descending order, with prefix sums for O(1) block sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedScores {
    eta: Vec<f64>,
    /// `perm[i]` is the original index of the i-th largest score.
    perm: Vec<usize>,
    head: Vec<f64>,
    /// `tail[n]` is the sum of the `n` smallest scores.
    tail: Vec<f64>,
    head_sq: Vec<f64>,
}

impl SortedScores {
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.eta
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Sum of the `p` largest scores.
    pub fn head_sum(&self, p: usize) -> f64 {
        self.head[p]
    }

    /// Sum of the `n` smallest scores.
    pub fn tail_sum(&self, n: usize) -> f64 {
        self.tail[n]
    }

    /// Scatters a vector given in sorted order back to original order.
    pub fn unsort(&self, sorted: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; sorted.len()];
        for (pos, &orig) in self.perm.iter().enumerate() {
            out[orig] = sorted[pos];
        }
        out
    }

    /// `z_p^+ = sum_{i<p} (eta_i - eta_p) - 1`, for `p` in `1..=m`.
    fn zplus(&self, p: usize) -> f64 {
        self.head[p - 1] - (p - 1) as f64 * self.eta[p - 1] - 1.0
    }

    /// Negative-mass level at which the `n`-th smallest score joins the
    /// negative block, for `n` in `1..=m`.
    fn zminus(&self, n: usize) -> f64 {
        let m = self.len();
        n as f64 * self.eta[m - n] - self.tail_sum(n)
    }

    /// `||eta - b^(p,n,z)||^2`, evaluated from prefix sums.
    fn triple_objective(&self, p: usize, n: usize, z: f64) -> f64 {
        let m = self.len();
        let pos_shift = (self.head[p] - 1.0 - z) / p as f64;
        let mut q = p as f64 * pos_shift * pos_shift;
        if n > 0 {
            let neg_shift = (self.tail_sum(n) + z) / n as f64;
            q += n as f64 * neg_shift * neg_shift;
        }
        q + (self.head_sq[m - n] - self.head_sq[p]).max(0.0)
    }

    /// Best admissible negative mass for a fixed `(p, n)`, or `None` when no
    /// sign-consistent point with this support exists under budget `s`.
    fn best_z(&self, p: usize, n: usize, s: f64) -> Option<f64> {
        if n == 0 {
            return (self.zplus(p) <= 0.0).then_some(0.0);
        }
        let lo = self.zplus(p).max(self.zminus(n)).max(0.0);
        if lo > s {
            return None;
        }
        Some(self.interior_z_unchecked(p, n).clamp(lo, s))
    }

    fn interior_z_unchecked(&self, p: usize, n: usize) -> f64 {
        let total = (p + n) as f64;
        n as f64 * (self.head[p] - 1.0) / total - p as f64 * self.tail_sum(n) / total
    }
}

/// Sorts scores descending; equal values keep their original index order.
pub fn sort_scores(eta_raw: &[f64]) -> Result<SortedScores> {
    if eta_raw.is_empty() {
        return Err(Error::invalid("score vector is empty"));
    }
    if eta_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let mut perm: Vec<usize> = (0..eta_raw.len()).collect();
    perm.sort_by(|&a, &b| eta_raw[b].total_cmp(&eta_raw[a]).then(a.cmp(&b)));
    let eta: Vec<f64> = perm.iter().map(|&i| eta_raw[i]).collect();

    let mut head = Vec::with_capacity(eta.len() + 1);
    let mut head_sq = Vec::with_capacity(eta.len() + 1);
    head.push(0.0);
    head_sq.push(0.0);
    for (i, v) in eta.iter().enumerate() {
        head.push(head[i] + v);
        head_sq.push(head_sq[i] + v * v);
    }
    let mut tail = Vec::with_capacity(eta.len() + 1);
    tail.push(0.0);
    for (i, v) in eta.iter().rev().enumerate() {
        tail.push(tail[i] + v);
    }
    Ok(SortedScores { eta, perm, head, tail, head_sq })
}

/// Positive-support size `p`, negative-support size `n` and negative mass `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportTriple {
    pub p: usize,
    pub n: usize,
    pub z: f64,
}

impl SupportTriple {
    pub fn new(p: usize, n: usize, z: f64) -> Self {
        Self { p, n, z }
    }
}

/// Minimizer of `||eta - b||^2` over the affine set where the `p` largest
/// scores sum to `1 + z`, the `n` smallest sum to `-z`, and the rest are zero.
/// The result is in original index order.
pub fn beta_from_triple(scores: &SortedScores, tri: SupportTriple) -> Result<Weights> {
    let sorted = sorted_beta(scores, tri)?;
    Ok(Weights(scores.unsort(&sorted)))
}

fn sorted_beta(scores: &SortedScores, tri: SupportTriple) -> Result<Vec<f64>> {
    let m = scores.len();
    let SupportTriple { p, n, z } = tri;
    if p == 0 {
        return Err(Error::invalid("triple must have p >= 1"));
    }
    if p + n > m {
        return Err(Error::invalid(format!("p + n = {} exceeds m = {m}", p + n)));
    }
    if !(z >= 0.0) {
        return Err(Error::invalid("negative mass z must be nonnegative"));
    }
    if n == 0 && z > 0.0 {
        return Err(Error::invalid("n = 0 requires z = 0"));
    }
    let mut beta = vec![0.0; m];
    let pos_shift = (scores.head_sum(p) - 1.0 - z) / p as f64;
    for (b, e) in beta[..p].iter_mut().zip(&scores.eta) {
        *b = e - pos_shift;
    }
    if n > 0 {
        let neg_shift = (scores.tail_sum(n) + z) / n as f64;
        for (b, e) in beta[m - n..].iter_mut().zip(&scores.eta[m - n..]) {
            *b = e - neg_shift;
        }
    }
    Ok(beta)
}

/// Largest positive and negative support sizes admissible under budget `s`:
/// `pbar = max{i : sum_{j<i}(eta_j - eta_i) < 1 + s}` and the analogous
/// count from the bottom with threshold `s` (zero when no index qualifies).
pub fn max_support_counts(scores: &SortedScores, s: f64) -> (usize, usize) {
    let m = scores.len();
    let pbar = (1..=m).filter(|&p| scores.zplus(p) + 1.0 < 1.0 + s).max().unwrap_or(1);
    let nbar = (1..=m).filter(|&n| scores.zminus(n) < s).max().unwrap_or(0);
    (pbar, nbar)
}

/// Negative-mass thresholds at which the optimal support sizes grow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoints {
    /// `zplus[p - 1]` is `z_p^+` for `p = 1..=m`.
    pub zplus: Vec<f64>,
    /// `zminus[n - 1]` is the threshold for a negative block of size `n`.
    pub zminus: Vec<f64>,
}

pub fn breakpoints(scores: &SortedScores) -> Breakpoints {
    let m = scores.len();
    Breakpoints {
        zplus: (1..=m).map(|p| scores.zplus(p)).collect(),
        zminus: (1..=m).map(|n| scores.zminus(n)).collect(),
    }
}

/// Unconstrained minimizer in `z` of `Q(b^(p,n,z))`.
pub fn interior_z(scores: &SortedScores, p: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("interior z is undefined for n = 0; use z = 0"));
    }
    if p == 0 || p + n > scores.len() {
        return Err(Error::invalid(format!("invalid support sizes p = {p}, n = {n}")));
    }
    Ok(scores.interior_z_unchecked(p, n))
}

/// Optimal triple for already-sorted scores. Returns the triple and the
/// number of candidates evaluated.
pub fn optimal_triple(scores: &SortedScores, spec: &ConstraintSpec) -> (SupportTriple, usize) {
    let m = scores.len();
    let k = spec.k().min(m);
    let s = spec.s();
    let (pbar, nbar) = max_support_counts(scores, s);

    if pbar + nbar <= k {
        if let Some(z) = scores.best_z(pbar, nbar, s) {
            return (SupportTriple::new(pbar, nbar, z), 1);
        }
    }

    let mut best: Option<(f64, SupportTriple)> = None;
    let mut evaluated = 0;
    let p_lo = k.saturating_sub(nbar).max(1);
    let p_hi = pbar.min(k);
    for p in p_lo..=p_hi {
        let n = k - p;
        let Some(z) = scores.best_z(p, n, s) else {
            continue;
        };
        evaluated += 1;
        let q = scores.triple_objective(p, n, z);
        if best.is_none_or(|(bq, _)| q < bq) {
            best = Some((q, SupportTriple::new(p, n, z)));
        }
    }
    // (1, 0, 0) is always admissible, so this only triggers on degenerate input.
    let tri = best.map_or(SupportTriple::new(1, 0, 0.0), |(_, t)| t);
    (tri, evaluated.max(1))
}

/// Projection of `point` onto the feasible set (without timing overhead).
pub fn project(point: &[f64], spec: &ConstraintSpec) -> Result<Weights> {
    let scores = sort_scores(point)?;
    let (tri, _) = optimal_triple(&scores, spec);
    beta_from_triple(&scores, tri)
}

/// Exact global minimizer of `||eta - b||^2` subject to the unit-sum,
/// cardinality and `l1` constraints. `k > m` is treated as `k = m`.
pub fn solve_orthogonal(eta_raw: &[f64], spec: &ConstraintSpec) -> Result<(Weights, SolveReport)> {
    let start = Instant::now();
    let scores = sort_scores(eta_raw)?;
    let (tri, evaluated) = optimal_triple(&scores, spec);
    let w = beta_from_triple(&scores, tri)?;
    let objective = eta_raw.iter().zip(w.iter()).map(|(e, b)| (e - b) * (e - b)).sum();
    let report = SolveReport {
        objective,
        status: SolveStatus::Optimal,
        gap: Some(0.0),
        iterations: evaluated,
        elapsed: start.elapsed().as_secs_f64(),
    };
    Ok((w, report))
}

/// Smallest number of nonzeros any `l1` budget can force:
/// `max{i : sum_{j<i} j * (eta_j - eta_{j+1}) < 1}`.
pub fn min_nonzeros(scores: &SortedScores) -> usize {
    let eta = scores.values();
    let mut best = 1;
    let mut acc = 0.0;
    for i in 2..=eta.len() {
        let j = i - 1;
        acc += j as f64 * (eta[j - 1] - eta[j]);
        if acc < 1.0 {
            best = i;
        }
    }
    best
}

/// Closed form of [`min_nonzeros`] for scores spaced linearly by `delta`:
/// `floor((sqrt((delta + 8) / delta) + 1) / 2)`.
pub fn linear_spacing_bound(delta: f64) -> Result<usize> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("spacing must be positive and finite, got {delta}")));
    }
    Ok((((delta + 8.0) / delta).sqrt() + 1.0).div_euclid(2.0) as usize)
}

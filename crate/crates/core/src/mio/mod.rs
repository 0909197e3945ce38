//! Mixed-integer quadratic formulation with big-M indicator rows.
//!
//! Variables per column `i`: the weight `b_i`, its positive and negative
//! parts `bp_i`, `bn_i`, and the binary indicator `z_i`.
//!
//! ```text
//!     minimize    b'X'Xb - 2y'Xb + lambda b'b
//!     subject to  b_i = bp_i - bn_i
//!                 sum b_i = 1
//!                 sum bp_i <= 1 + s,  sum bn_i <= s
//!                 M- z_i <= b_i <= M+ z_i
//!                 sum z_i <= k
//!                 bp, bn >= 0,  z binary
//! ```
//!
//! At `lambda = 0` the objective equals `||y - Xb||^2 - y'y`.

mod bnb;
mod lp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use bnb::{branch_and_bound, BnbConfig};
pub use lp::export_model;

use crate::error::{Error, Result};
use crate::problem::{ConstraintSpec, RegressionData, ZERO_TOL};

/// Default per-instance time limit in seconds.
pub const DEFAULT_TIME_LIMIT: f64 = 600.0;

/// Big-M bounds: `m_minus <= b_i <= m_plus` whenever `z_i = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigM {
    pub m_minus: f64,
    pub m_plus: f64,
}

impl BigM {
    /// The bounds implied by the constraints themselves: `-s` and `1 + s`.
    pub fn natural(spec: &ConstraintSpec) -> Self {
        Self { m_minus: -spec.s(), m_plus: 1.0 + spec.s() }
    }

    pub fn validate(&self, spec: &ConstraintSpec) -> Result<()> {
        if !(self.m_minus <= 0.0 && self.m_plus >= 0.0) {
            return Err(Error::invalid("big-M bounds must satisfy m_minus <= 0 <= m_plus"));
        }
        if self.m_minus < -spec.s() - 1e-12 || self.m_plus > 1.0 + spec.s() + 1e-12 {
            return Err(Error::invalid("big-M bounds are looser than -s and 1 + s"));
        }
        Ok(())
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        w.iter().all(|&v| v >= self.m_minus - tol && v <= self.m_plus + tol)
    }
}

/// Bounds derived from a heuristic solution:
/// `M- = max{1.5 min(min_i b_i, -s/k), -s}` and
/// `M+ = min{1.5 max(max_i b_i, (1+s)/k), 1+s}`.
pub fn big_m_from_dfo(dfo_solution: &[f64], spec: &ConstraintSpec) -> BigM {
    let s = spec.s();
    let k = spec.k() as f64;
    let lo = dfo_solution.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = dfo_solution.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    BigM {
        m_minus: (1.5 * lo.min(-s / k)).max(-s),
        m_plus: (1.5 * hi.max((1.0 + s) / k)).min(1.0 + s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKind {
    Beta,
    Plus,
    Minus,
    Indicator,
}

/// A model variable; `index` is the zero-based column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var {
    pub kind: VarKind,
    pub index: usize,
}

impl Var {
    pub fn name(&self) -> String {
        let prefix = match self.kind {
            VarKind::Beta => "b",
            VarKind::Plus => "bp",
            VarKind::Minus => "bn",
            VarKind::Indicator => "z",
        };
        format!("{prefix}{}", self.index + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A full assignment of the model's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoint {
    pub beta: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub indicator: Vec<f64>,
}

impl ModelPoint {
    fn value(&self, v: Var) -> f64 {
        match v.kind {
            VarKind::Beta => self.beta[v.index],
            VarKind::Plus => self.plus[v.index],
            VarKind::Minus => self.minus[v.index],
            VarKind::Indicator => self.indicator[v.index],
        }
    }
}

#[derive(Debug, Clone)]
pub struct MiqpModel {
    spec: ConstraintSpec,
    bigm: BigM,
    lambda: f64,
    gram: DMatrix<f64>,
    lin: DVector<f64>,
    yy: f64,
    constraints: Vec<LinearConstraint>,
}

/// Assembles the mixed-integer model for `data` under `spec`.
pub fn build_model(
    data: &RegressionData,
    spec: &ConstraintSpec,
    bigm: BigM,
    lambda: f64,
) -> Result<MiqpModel> {
    bigm.validate(spec)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda must be finite and nonnegative"));
    }
    let m = data.n_vars();
    let var = |kind, index| Var { kind, index };
    let all = |kind| (0..m).map(move |i| (Var { kind, index: i }, 1.0)).collect::<Vec<_>>();

    let mut constraints = Vec::with_capacity(3 * m + 4);
    constraints.push(LinearConstraint {
        name: "unit_sum".into(),
        terms: all(VarKind::Beta),
        sense: Sense::Eq,
        rhs: 1.0,
    });
    constraints.push(LinearConstraint {
        name: "positive_budget".into(),
        terms: all(VarKind::Plus),
        sense: Sense::Le,
        rhs: 1.0 + spec.s(),
    });
    constraints.push(LinearConstraint {
        name: "negative_budget".into(),
        terms: all(VarKind::Minus),
        sense: Sense::Le,
        rhs: spec.s(),
    });
    for i in 0..m {
        constraints.push(LinearConstraint {
            name: format!("split_{}", i + 1),
            terms: vec![
                (var(VarKind::Beta, i), 1.0),
                (var(VarKind::Plus, i), -1.0),
                (var(VarKind::Minus, i), 1.0),
            ],
            sense: Sense::Eq,
            rhs: 0.0,
        });
    }
    for i in 0..m {
        constraints.push(LinearConstraint {
            name: format!("upper_{}", i + 1),
            terms: vec![(var(VarKind::Beta, i), 1.0), (var(VarKind::Indicator, i), -bigm.m_plus)],
            sense: Sense::Le,
            rhs: 0.0,
        });
        constraints.push(LinearConstraint {
            name: format!("lower_{}", i + 1),
            terms: vec![(var(VarKind::Beta, i), 1.0), (var(VarKind::Indicator, i), -bigm.m_minus)],
            sense: Sense::Ge,
            rhs: 0.0,
        });
    }
    constraints.push(LinearConstraint {
        name: "cardinality".into(),
        terms: all(VarKind::Indicator),
        sense: Sense::Le,
        rhs: spec.k() as f64,
    });

    let x = data.x();
    Ok(MiqpModel {
        spec: *spec,
        bigm,
        lambda,
        gram: x.tr_mul(x),
        lin: x.tr_mul(data.y()),
        yy: data.y().norm_squared(),
        constraints,
    })
}

impl MiqpModel {
    pub fn n_columns(&self) -> usize {
        self.lin.len()
    }

    pub fn num_variables(&self) -> usize {
        4 * self.n_columns()
    }

    pub fn num_binaries(&self) -> usize {
        self.n_columns()
    }

    pub fn spec(&self) -> &ConstraintSpec {
        &self.spec
    }

    pub fn bigm(&self) -> BigM {
        self.bigm
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    /// `X'X` (the quadratic form before the ridge term).
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `X'y`; the linear objective coefficients are `-2 X'y`.
    pub fn cross(&self) -> &DVector<f64> {
        &self.lin
    }

    /// `y'y`, the constant dropped from the objective.
    pub fn offset(&self) -> f64 {
        self.yy
    }

    /// `b'X'Xb - 2y'Xb + lambda b'b`.
    pub fn objective(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        b.dot(&(&self.gram * &b)) - 2.0 * self.lin.dot(&b) + self.lambda * b.norm_squared()
    }

    /// Lifts `beta` to a model point with `z_i = 1` exactly on its support.
    pub fn extend(&self, beta: &[f64]) -> ModelPoint {
        ModelPoint {
            beta: beta.to_vec(),
            plus: beta.iter().map(|v| v.max(0.0)).collect(),
            minus: beta.iter().map(|v| (-v).max(0.0)).collect(),
            indicator: beta.iter().map(|v| if v.abs() > ZERO_TOL { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Checks every row, sign bound and binary restriction.
    pub fn is_feasible_point(&self, point: &ModelPoint, tol: f64) -> bool {
        let m = self.n_columns();
        let sizes_ok =
            [&point.beta, &point.plus, &point.minus, &point.indicator].iter().all(|v| v.len() == m);
        if !sizes_ok {
            return false;
        }
        let bounds_ok = point.plus.iter().chain(&point.minus).all(|&v| v >= -tol)
            && point.indicator.iter().all(|&z| z.abs() <= tol || (z - 1.0).abs() <= tol);
        bounds_ok
            && self.constraints.iter().all(|c| {
                let lhs: f64 = c.terms.iter().map(|&(v, a)| a * point.value(v)).sum();
                match c.sense {
                    Sense::Le => lhs <= c.rhs + tol,
                    Sense::Ge => lhs >= c.rhs - tol,
                    Sense::Eq => (lhs - c.rhs).abs() <= tol,
                }
            })
    }
}

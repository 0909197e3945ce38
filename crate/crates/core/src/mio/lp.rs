//! CPLEX LP text export.

use std::fmt::Write;

use super::{MiqpModel, Sense, Var, VarKind};

fn push_term(out: &mut String, first: &mut bool, coef: f64, body: &str) {
    if coef == 0.0 {
        return;
    }
    let sign = if coef < 0.0 { "-" } else { "+" };
    if *first {
        if coef < 0.0 {
            out.push_str("- ");
        }
        *first = false;
    } else {
        let _ = write!(out, " {sign} ");
    }
    let _ = write!(out, "{} {body}", coef.abs());
}

/// Renders `model` in LP format. Output is deterministic: identical models
/// produce byte-identical text.
pub fn export_model(model: &MiqpModel) -> String {
    let m = model.n_columns();
    let name = |kind, index| Var { kind, index }.name();
    let mut out = String::new();
    out.push_str("\\ Sparse unit-sum regression\n");
    let _ = writeln!(out, "\\ columns {m}, k {}, s {}", model.spec().k(), model.spec().s());
    out.push_str("Minimize\n obj: ");

    let mut first = true;
    for i in 0..m {
        push_term(&mut out, &mut first, -2.0 * model.cross()[i], &name(VarKind::Beta, i));
    }
    let mut quad = String::new();
    let mut qfirst = true;
    let g = model.gram();
    for i in 0..m {
        let bi = name(VarKind::Beta, i);
        push_term(&mut quad, &mut qfirst, 2.0 * (g[(i, i)] + model.lambda()), &format!("{bi} ^ 2"));
        for j in i + 1..m {
            let bj = name(VarKind::Beta, j);
            push_term(&mut quad, &mut qfirst, 4.0 * g[(i, j)], &format!("{bi} * {bj}"));
        }
    }
    if !quad.is_empty() {
        if first {
            let _ = write!(out, "[ {quad} ] / 2");
        } else {
            let _ = write!(out, " + [ {quad} ] / 2");
        }
    } else if first {
        out.push_str("0 b1");
    }
    out.push_str("\nSubject To\n");

    for c in model.constraints() {
        let _ = write!(out, " {}: ", c.name);
        let mut first = true;
        for (v, a) in &c.terms {
            push_term(&mut out, &mut first, *a, &v.name());
        }
        if first {
            out.push('0');
        }
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", c.rhs);
    }

    out.push_str("Bounds\n");
    for i in 0..m {
        let _ = writeln!(out, " {} free", name(VarKind::Beta, i));
    }
    for i in 0..m {
        let _ = writeln!(out, " {} >= 0", name(VarKind::Plus, i));
    }
    for i in 0..m {
        let _ = writeln!(out, " {} >= 0", name(VarKind::Minus, i));
    }
    out.push_str("Binaries\n");
    for i in 0..m {
        let _ = writeln!(out, " {}", name(VarKind::Indicator, i));
    }
    out.push_str("End\n");
    out
}

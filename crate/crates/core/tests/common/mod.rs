//! Independent reference solvers used only by the tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparsum::RegressionData;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_data(rng: &mut ChaCha8Rng, t: usize, m: usize) -> RegressionData {
    let x = DMatrix::from_fn(t, m, |_, _| rng.sample(StandardNormal));
    let y = DVector::from_fn(t, |_, _| rng.sample(StandardNormal));
    RegressionData::new(x, y).unwrap()
}

/// Every way to label each of `m` items positive, negative or absent with at
/// most `k` labelled items and at least one positive.
pub fn sign_patterns(m: usize, k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let mut c = code;
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for i in 0..m {
            match c % 3 {
                1 => pos.push(i),
                2 => neg.push(i),
                _ => {}
            }
            c /= 3;
        }
        if !pos.is_empty() && pos.len() + neg.len() <= k {
            out.push((pos, neg));
        }
    }
    out
}

/// Orthogonal-design optimum by enumerating every positive block `P` and
/// negative block `N`: on a fixed pattern the minimizer shifts `P` and `N`
/// uniformly, with negative mass `clamp(z*, 0, s)`. Returns the best
/// sign-consistent objective `||eta - b||^2` and its minimizer.
pub fn brute_orthogonal(eta: &[f64], k: usize, s: f64) -> (f64, Vec<f64>) {
    let m = eta.len();
    let mut best = (f64::INFINITY, vec![0.0; m]);
    for (pos, neg) in sign_patterns(m, k) {
        let p = pos.len() as f64;
        let n = neg.len() as f64;
        let sp: f64 = pos.iter().map(|&i| eta[i]).sum();
        let tn: f64 = neg.iter().map(|&i| eta[i]).sum();
        let z = if neg.is_empty() {
            0.0
        } else {
            (n * (sp - 1.0) / (p + n) - p * tn / (p + n)).clamp(0.0, s)
        };
        let mut b = vec![0.0; m];
        for &i in &pos {
            b[i] = eta[i] - (sp - 1.0 - z) / p;
        }
        for &i in &neg {
            b[i] = eta[i] - (tn + z) / n;
        }
        let consistent = pos.iter().all(|&i| b[i] >= -1e-12) && neg.iter().all(|&i| b[i] <= 1e-12);
        if !consistent {
            continue;
        }
        let q: f64 = eta.iter().zip(&b).map(|(e, v)| (e - v).powi(2)).sum();
        if q < best.0 {
            best = (q, b);
        }
    }
    best
}

/// Exact optimum of `||y - X b||^2` over `sum(b) = 1`, negative mass at most
/// `s`, at most `k` nonzeros, by enumerating sign patterns. On each pattern
/// the optimum sits on an affine set (`sum = 1`, optionally negative mass
/// `= s`) and is found from the KKT linear system; sign-consistent solutions
/// are feasible and the true optimum is among them.
pub fn brute_sparse_regression(data: &RegressionData, k: usize, s: f64) -> (f64, Vec<f64>) {
    let m = data.n_vars();
    let x = data.x();
    let g = x.tr_mul(x);
    let c = x.tr_mul(data.y());
    let yy = data.y().norm_squared();
    let mut best = (f64::INFINITY, vec![0.0; m]);
    for (pos, neg) in sign_patterns_fast(m, k) {
        let cols: Vec<usize> = pos.iter().chain(&neg).copied().collect();
        let a = cols.len();
        for budget_active in [false, true] {
            if budget_active && neg.is_empty() {
                continue;
            }
            let rows = a + 1 + usize::from(budget_active);
            let mut kkt = DMatrix::zeros(rows, rows);
            let mut rhs = DVector::zeros(rows);
            for (ii, &i) in cols.iter().enumerate() {
                for (jj, &j) in cols.iter().enumerate() {
                    kkt[(ii, jj)] = 2.0 * g[(i, j)];
                }
                rhs[ii] = 2.0 * c[i];
                kkt[(ii, a)] = 1.0;
                kkt[(a, ii)] = 1.0;
            }
            rhs[a] = 1.0;
            if budget_active {
                for ii in pos.len()..a {
                    kkt[(ii, a + 1)] = 1.0;
                    kkt[(a + 1, ii)] = 1.0;
                }
                rhs[a + 1] = -s;
            }
            let Some(sol) = kkt.lu().solve(&rhs) else {
                continue;
            };
            let b_a = sol.rows(0, a);
            let ok = (0..pos.len()).all(|i| b_a[i] >= -1e-10)
                && (pos.len()..a).all(|i| b_a[i] <= 1e-10)
                && (pos.len()..a).map(|i| -b_a[i]).sum::<f64>() <= s + 1e-10;
            if !ok {
                continue;
            }
            let mut b = vec![0.0; m];
            for (ii, &i) in cols.iter().enumerate() {
                b[i] = b_a[ii];
            }
            let bv = DVector::from_column_slice(&b);
            let val = (bv.dot(&(&g * &bv)) - 2.0 * c.dot(&bv) + yy).max(0.0);
            if val < best.0 {
                best = (val, b);
            }
        }
    }
    best
}

/// As [`sign_patterns`], built by choosing supports first (cheaper for
/// `k << m`).
pub fn sign_patterns_fast(m: usize, k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    let mut support = Vec::new();
    fn rec(
        start: usize,
        m: usize,
        k: usize,
        support: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, Vec<usize>)>,
    ) {
        if !support.is_empty() {
            let a = support.len();
            for mask in 0..(1u32 << a) {
                let pos: Vec<usize> =
                    (0..a).filter(|b| mask & (1 << b) == 0).map(|b| support[b]).collect();
                let neg: Vec<usize> =
                    (0..a).filter(|b| mask & (1 << b) != 0).map(|b| support[b]).collect();
                if !pos.is_empty() {
                    out.push((pos, neg));
                }
            }
        }
        if support.len() == k {
            return;
        }
        for i in start..m {
            support.push(i);
            rec(i + 1, m, k, support, out);
            support.pop();
        }
    }
    rec(0, m, k, &mut support, &mut out);
    out
}

/// Minimal LP-format reader for round-trip checks: returns the linear
/// objective, quadratic objective terms (already divided by 2), and each
/// constraint as `(name, terms, sense, rhs)`.
pub type ParsedConstraint = (String, Vec<(String, f64)>, String, f64);

pub struct ParsedLp {
    pub linear: Vec<(String, f64)>,
    pub quadratic: Vec<(String, String, f64)>,
    pub constraints: Vec<ParsedConstraint>,
    pub free: Vec<String>,
    pub nonneg: Vec<String>,
    pub binaries: Vec<String>,
}

fn parse_terms(expr: &str) -> Vec<(Vec<String>, f64)> {
    let toks: Vec<&str> = expr.split_whitespace().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut sign = 1.0;
    while i < toks.len() {
        match toks[i] {
            "+" => {
                sign = 1.0;
                i += 1;
            }
            "-" => {
                sign = -1.0;
                i += 1;
            }
            tok => {
                let coef: f64 = tok.parse().expect("coefficient");
                let mut vars = vec![toks[i + 1].to_string()];
                i += 2;
                if i < toks.len() && toks[i] == "^" {
                    vars.push(vars[0].clone());
                    i += 2;
                } else if i < toks.len() && toks[i] == "*" {
                    vars.push(toks[i + 1].to_string());
                    i += 2;
                }
                out.push((vars, sign * coef));
                sign = 1.0;
            }
        }
    }
    out
}

pub fn parse_lp(text: &str) -> ParsedLp {
    let mut lp = ParsedLp {
        linear: vec![],
        quadratic: vec![],
        constraints: vec![],
        free: vec![],
        nonneg: vec![],
        binaries: vec![],
    };
    let mut section = "";
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        match line {
            "Minimize" | "Subject To" | "Bounds" | "Binaries" | "End" => {
                section = match line {
                    "Minimize" => "obj",
                    "Subject To" => "st",
                    "Bounds" => "bounds",
                    "Binaries" => "bin",
                    _ => "end",
                };
                continue;
            }
            _ => {}
        }
        match section {
            "obj" => {
                let body = line.strip_prefix("obj:").expect("objective label").trim();
                let (lin, quad) = match body.find('[') {
                    Some(p) => {
                        let close = body.find(']').expect("closing bracket");
                        assert_eq!(body[close + 1..].trim(), "/ 2");
                        (body[..p].trim().trim_end_matches('+').trim(), &body[p + 1..close])
                    }
                    None => (body, ""),
                };
                for (vars, c) in parse_terms(lin) {
                    lp.linear.push((vars[0].clone(), c));
                }
                for (vars, c) in parse_terms(quad) {
                    lp.quadratic.push((vars[0].clone(), vars[1].clone(), c / 2.0));
                }
            }
            "st" => {
                let (name, rest) = line.split_once(':').expect("constraint label");
                let toks: Vec<&str> = rest.split_whitespace().collect();
                let pos = toks.iter().position(|t| ["<=", ">=", "="].contains(t)).unwrap();
                let expr = toks[..pos].join(" ");
                let terms = if expr == "0" {
                    vec![]
                } else {
                    parse_terms(&expr).into_iter().map(|(v, c)| (v[0].clone(), c)).collect()
                };
                lp.constraints.push((
                    name.trim().to_string(),
                    terms,
                    toks[pos].to_string(),
                    toks[pos + 1].parse().unwrap(),
                ));
            }
            "bounds" => {
                let toks: Vec<&str> = line.split_whitespace().collect();
                match toks.as_slice() {
                    [v, "free"] => lp.free.push(v.to_string()),
                    [v, ">=", "0"] => lp.nonneg.push(v.to_string()),
                    other => panic!("unexpected bound {other:?}"),
                }
            }
            "bin" => lp.binaries.extend(line.split_whitespace().map(str::to_string)),
            _ => panic!("text after End: {line}"),
        }
    }
    lp
}

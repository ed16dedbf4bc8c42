//! Cross-validated convex stacking of the base learners ("super
//! learner"), plus variable screening.
//!
//! Stack weights live on the probability simplex and minimize the
//! out-of-fold loss. The optimizer is projected gradient descent followed
//! by a sweep over the simplex vertices; because every vertex is a
//! candidate, the stacked out-of-fold loss can never exceed the best
//! single member's by more than the declared tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{fit_learner, fold_assignment_matrix, FittedLearner, LearnerKind};
use crate::linalg::Matrix;
use crate::util::split_seed;

/// Loss minimized by the stack weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackLoss {
    Squared,
    Log,
}

/// A fitted cross-validated ensemble.
#[derive(Debug, Clone)]
pub struct StackedLearner {
    pub members: Vec<FittedLearner>,
    pub kinds: Vec<LearnerKind>,
    /// Simplex weights aligned with `members`.
    pub weights: Vec<f64>,
    pub cv_folds: usize,
    /// Out-of-fold risk per member.
    pub cv_risk: Vec<f64>,
    /// Out-of-fold risk of the stacked weights.
    pub stack_risk: f64,
    /// Fold-noise tolerance declared at fit time.
    pub tolerance: f64,
    /// Weight-optimizer description.
    pub meta: String,
    pub warnings: Vec<String>,
}

impl StackedLearner {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; x.rows()];
        for (m, &w) in self.members.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(m.predict(x)) {
                *o += w * p;
            }
        }
        out
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.members
            .iter()
            .zip(&self.weights)
            .map(|(m, &w)| if w == 0.0 { 0.0 } else { w * m.predict_row(row) })
            .sum()
    }

    pub fn describe(&self) -> String {
        self.kinds
            .iter()
            .zip(&self.weights)
            .map(|(k, w)| format!("{}={:.3}", k.label(), w))
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn loss_of(loss: StackLoss, pred: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    match loss {
        StackLoss::Squared => pred.iter().zip(y).map(|(p, yi)| (p - yi).powi(2)).sum::<f64>() / n,
        StackLoss::Log => {
            pred.iter()
                .zip(y)
                .map(|(p, yi)| {
                    let p = p.clamp(1e-12, 1.0 - 1e-12);
                    -(yi * p.ln() + (1.0 - yi) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / n
        }
    }
}

/// Fit the stack: out-of-fold predictions per member, simplex weights
/// minimizing the CV loss, members refit on the full data. Members that
/// fail anywhere are excluded with a warning; if all fail, an error.
pub fn fit_stack(
    kinds: &[LearnerKind],
    x: &Matrix,
    y: &[f64],
    folds: usize,
    loss: StackLoss,
    seed: u64,
    tolerance: f64,
) -> Result<StackedLearner> {
    if kinds.is_empty() {
        return Err(Error::Fit("stack needs at least one learner kind".into()));
    }
    let n = x.rows();
    if folds < 2 || folds > n {
        return Err(Error::Fit(format!("folds must lie in 2..=n, got {} (n={})", folds, n)));
    }
    if loss == StackLoss::Log && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Fit("log loss requires a 0/1 response".into()));
    }

    let assignment = fold_assignment_matrix(x, y, folds, split_seed(seed, 0x0f01));
    let mut warnings = Vec::new();

    let mut oof: Vec<Vec<f64>> = Vec::new();
    let mut full: Vec<FittedLearner> = Vec::new();
    let mut kept_kinds: Vec<LearnerKind> = Vec::new();

    'member: for (ki, &kind) in kinds.iter().enumerate() {
        let member_seed = split_seed(seed, 0x0f02 + ki as u64);
        let mut z = vec![f64::NAN; n];
        for fold in 0..folds {
            let train: Vec<usize> = (0..n).filter(|&r| assignment[r] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&r| assignment[r] == fold).collect();
            if train.is_empty() || test.is_empty() {
                continue;
            }
            let xt = submatrix(x, &train);
            let yt: Vec<f64> = train.iter().map(|&r| y[r]).collect();
            let fitted = match fit_learner(kind, &xt, &yt, split_seed(member_seed, fold as u64)) {
                Ok(f) => f,
                Err(e) => {
                    warnings.push(format!("{} excluded: {}", kind.label(), e));
                    continue 'member;
                }
            };
            for &r in &test {
                z[r] = fitted.predict_row(x.row(r));
            }
        }
        if z.iter().any(|v| v.is_nan()) {
            warnings.push(format!("{} excluded: incomplete out-of-fold predictions", kind.label()));
            continue;
        }
        let refit = match fit_learner(kind, x, y, member_seed) {
            Ok(f) => f,
            Err(e) => {
                warnings.push(format!("{} excluded on full refit: {}", kind.label(), e));
                continue;
            }
        };
        oof.push(z);
        full.push(refit);
        kept_kinds.push(kind);
    }

    if full.is_empty() {
        return Err(Error::Fit(format!(
            "all stack members failed to fit: {}",
            warnings.join("; ")
        )));
    }

    let m = full.len();
    let cv_risk: Vec<f64> = oof.iter().map(|z| loss_of(loss, z, y)).collect();

    let weights = if m == 1 {
        vec![1.0]
    } else {
        optimize_simplex(&oof, y, loss)
    };
    let blended: Vec<f64> = (0..n)
        .map(|r| (0..m).map(|k| weights[k] * oof[k][r]).sum())
        .collect();
    let stack_risk = loss_of(loss, &blended, y);

    debug_assert!(
        stack_risk <= cv_risk.iter().cloned().fold(f64::INFINITY, f64::min) + tolerance,
        "stack risk exceeds best member risk beyond tolerance"
    );

    Ok(StackedLearner {
        members: full,
        kinds: kept_kinds,
        weights,
        cv_folds: folds,
        cv_risk,
        stack_risk,
        tolerance,
        meta: "projected_gradient+vertex_sweep".into(),
        warnings,
    })
}

fn submatrix(x: &Matrix, rows: &[usize]) -> Matrix {
    let k = x.cols();
    let mut flat = Vec::with_capacity(rows.len() * k);
    for &r in rows {
        flat.extend_from_slice(x.row(r));
    }
    Matrix::from_flat(flat, rows.len(), k)
}

/// Minimize the CV loss over the probability simplex: projected gradient
/// with backtracking, then compare against every vertex; ties break toward
/// the earlier (simpler) member.
fn optimize_simplex(oof: &[Vec<f64>], y: &[f64], loss: StackLoss) -> Vec<f64> {
    let m = oof.len();
    let n = y.len();
    let eval = |w: &[f64]| -> f64 {
        let pred: Vec<f64> = (0..n).map(|r| (0..m).map(|k| w[k] * oof[k][r]).sum()).collect();
        loss_of(loss, &pred, y)
    };
    let grad = |w: &[f64]| -> Vec<f64> {
        let pred: Vec<f64> = (0..n).map(|r| (0..m).map(|k| w[k] * oof[k][r]).sum()).collect();
        let mut g = vec![0.0; m];
        match loss {
            StackLoss::Squared => {
                for r in 0..n {
                    let d = 2.0 * (pred[r] - y[r]) / n as f64;
                    for k in 0..m {
                        g[k] += d * oof[k][r];
                    }
                }
            }
            StackLoss::Log => {
                for r in 0..n {
                    let p = pred[r].clamp(1e-12, 1.0 - 1e-12);
                    let d = ((p - y[r]) / (p * (1.0 - p))) / n as f64;
                    for k in 0..m {
                        g[k] += d * oof[k][r];
                    }
                }
            }
        }
        g
    };

    let mut w = vec![1.0 / m as f64; m];
    let mut f = eval(&w);
    let mut step = 1.0;
    for _ in 0..500 {
        let g = grad(&w);
        let mut improved = false;
        for _ in 0..25 {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let cand = project_simplex(&cand);
            let fc = eval(&cand);
            if fc < f - 1e-15 {
                w = cand;
                f = fc;
                improved = true;
                step *= 1.3;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }

    // vertex sweep: the grid always contains every vertex
    let mut best_w = w;
    let mut best_f = f;
    for k in (0..m).rev() {
        let mut v = vec![0.0; m];
        v[k] = 1.0;
        let fv = eval(&v);
        if fv <= best_f + 1e-12 && (fv < best_f - 1e-12 || true) {
            // <= with reverse iteration: earlier members win exact ties
            if fv < best_f - 1e-12 || fv <= best_f + 1e-12 {
                best_w = v;
                best_f = fv;
            }
        }
    }
    // one more pass so the PGD interior solution survives when strictly better
    let f_interior = eval(&best_w);
    debug_assert!((f_interior - best_f).abs() < 1e-9);
    best_w
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Variable screening methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenMethod {
    LassoPath,
    AssociationScreen { threshold: f64 },
}

impl ScreenMethod {
    pub fn association_default() -> Self {
        ScreenMethod::AssociationScreen { threshold: 0.1 }
    }
}

/// Select design columns. Column 0 is assumed to be the intercept and is
/// always kept, as is the treatment column when given. An empty selection
/// falls back to {intercept, treatment}.
pub fn screen(
    x: &Matrix,
    y: &[f64],
    method: ScreenMethod,
    treatment: Option<usize>,
    binary_cols: &[bool],
    seed: u64,
) -> Vec<usize> {
    let mut kept: Vec<usize> = match method {
        ScreenMethod::LassoPath => {
            match crate::learners::fit_lasso(x, y, None, split_seed(seed, 0x5c1)) {
                Ok(f) => f.nonzero_set().unwrap_or_default(),
                Err(_) => Vec::new(),
            }
        }
        ScreenMethod::AssociationScreen { threshold } => {
            let y_binary = y.iter().all(|&v| v == 0.0 || v == 1.0);
            (1..x.cols())
                .filter(|&j| {
                    let col = x.column(j);
                    let stat = if binary_cols.get(j).copied().unwrap_or(false) && y_binary {
                        cramers_v_binary(&col, y)
                    } else {
                        pearson_abs(&col, y)
                    };
                    stat > threshold
                })
                .collect()
        }
    };
    kept.retain(|&j| j != 0);
    if let Some(t) = treatment {
        if !kept.contains(&t) {
            kept.push(t);
        }
    }
    kept.sort_unstable();
    let mut out = vec![0];
    out.extend(kept);
    out
}

fn pearson_abs(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - ma;
        let db = y - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        (sab / (saa.sqrt() * sbb.sqrt())).abs()
    }
}

/// Cramér's V for a 2x2 table equals the absolute phi coefficient.
fn cramers_v_binary(a: &[f64], b: &[f64]) -> f64 {
    let mut n11 = 0.0_f64;
    let mut n10 = 0.0_f64;
    let mut n01 = 0.0_f64;
    let mut n00 = 0.0_f64;
    for (&x, &y) in a.iter().zip(b) {
        match (x != 0.0, y != 0.0) {
            (true, true) => n11 += 1.0,
            (true, false) => n10 += 1.0,
            (false, true) => n01 += 1.0,
            (false, false) => n00 += 1.0,
        }
    }
    let r1 = n11 + n10;
    let r0 = n01 + n00;
    let c1 = n11 + n01;
    let c0 = n10 + n00;
    let denom = (r1 * r0 * c1 * c0).sqrt();
    if denom <= 0.0 {
        0.0
    } else {
        ((n11 * n00 - n10 * n01) / denom).abs()
    }
}

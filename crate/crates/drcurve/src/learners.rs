//! Self-contained supervised learners: constants, least squares, ridge,
//! coordinate-descent lasso, logistic regression via IRLS and a boosted
//! ensemble of depth-1 regression stumps.
//!
//! Every learner consumes a design matrix whose first column is expected
//! to be the intercept (a column of ones); none of them add an intercept
//! on their own. Fitting is deterministic given `(data, seed)` and fitted
//! learners are immutable, so they can be shared across threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, mean, median, solve_psd, Matrix};

/// Candidate learner families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    MeanOnly,
    MedianOnly,
    Ols,
    Ridge { lambda: f64 },
    PolynomialOls { degree: u32 },
    Lasso,
    Logistic,
    RegressionStumpEnsemble { rounds: u32, shrinkage: f64 },
    /// Additive piecewise-linear spline: hinge basis at `knots` interior
    /// quantiles per continuous column, ridge-penalized; extrapolates
    /// linearly beyond the boundary knots.
    SplineAdditive { knots: u32 },
    /// Quasi-binomial logistic for responses in [0,1] (iterated outcomes
    /// of bounded targets); same IRLS, fractional responses allowed.
    FractionalLogistic,
}

impl LearnerKind {
    /// Boosted stumps with the fixed defaults (100 rounds, shrinkage 0.1).
    pub fn stumps() -> Self {
        LearnerKind::RegressionStumpEnsemble { rounds: 100, shrinkage: 0.1 }
    }

    /// Additive splines with the default knot count.
    pub fn splines() -> Self {
        LearnerKind::SplineAdditive { knots: 6 }
    }

    pub fn label(&self) -> String {
        match self {
            LearnerKind::MeanOnly => "mean_only".into(),
            LearnerKind::MedianOnly => "median_only".into(),
            LearnerKind::Ols => "ols".into(),
            LearnerKind::Ridge { lambda } => format!("ridge({lambda})"),
            LearnerKind::PolynomialOls { degree } => format!("polynomial_ols({degree})"),
            LearnerKind::Lasso => "lasso".into(),
            LearnerKind::Logistic => "logistic".into(),
            LearnerKind::RegressionStumpEnsemble { rounds, shrinkage } => {
                format!("stumps({rounds},{shrinkage})")
            }
            LearnerKind::SplineAdditive { knots } => format!("spline_additive({knots})"),
            LearnerKind::FractionalLogistic => "fractional_logistic".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stump {
    feature: usize,
    threshold: f64,
    /// Leaf values already scaled by the shrinkage factor.
    left: f64,
    right: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Model {
    Constant(f64),
    /// Plain linear predictor over the design columns.
    Linear { coef: Vec<f64> },
    /// Linear predictor over the design columns extended by powers
    /// 2..=degree of every column.
    Polynomial { coef: Vec<f64>, degree: u32, base_cols: usize },
    Logistic { coef: Vec<f64>, ridge_stabilized: bool },
    Lasso { intercept: f64, coef: Vec<f64>, lambda: f64 },
    Stumps { init: f64, stumps: Vec<Stump> },
    /// Linear terms over the base design plus hinge terms (x - knot)+ per
    /// expandable column.
    Spline { coef: Vec<f64>, base_cols: usize, knots: Vec<(usize, f64)> },
}

/// A fitted learner: deterministic prediction given the fitted state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedLearner {
    pub kind: LearnerKind,
    model: Model,
    /// `sqrt(RSS / (n - p))` for Gaussian learners, 0 elsewhere.
    pub residual_scale: f64,
    pub warnings: Vec<String>,
}

impl FittedLearner {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.model {
            Model::Constant(v) => *v,
            Model::Linear { coef } => dot(row, coef),
            Model::Polynomial { coef, degree, base_cols } => {
                let mut eta = 0.0;
                for (j, &x) in row.iter().enumerate().take(*base_cols) {
                    eta += coef[j] * x;
                }
                let mut k = *base_cols;
                for d in 2..=*degree {
                    for &x in row.iter().take(*base_cols) {
                        eta += coef[k] * x.powi(d as i32);
                        k += 1;
                    }
                }
                eta
            }
            // predictions stay strictly inside (0,1)
            Model::Logistic { coef, .. } => sigmoid(dot(row, coef)).clamp(1e-15, 1.0 - 1e-15),
            Model::Lasso { intercept, coef, .. } => intercept + dot(row, coef),
            Model::Stumps { init, stumps } => {
                let mut f = *init;
                for s in stumps {
                    f += if row[s.feature] <= s.threshold { s.left } else { s.right };
                }
                f
            }
            Model::Spline { coef, base_cols, knots } => {
                let mut eta = 0.0;
                for (j, &x) in row.iter().enumerate().take(*base_cols) {
                    eta += coef[j] * x;
                }
                for (k, &(j, knot)) in knots.iter().enumerate() {
                    let h = (row[j] - knot).max(0.0);
                    eta += coef[*base_cols + k] * h;
                }
                eta
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict_row(x.row(r))).collect()
    }

    /// Indices of design columns with nonzero coefficients (lasso only).
    pub fn nonzero_set(&self) -> Option<Vec<usize>> {
        match &self.model {
            Model::Lasso { coef, .. } => {
                Some(coef.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(i, _)| i).collect())
            }
            _ => None,
        }
    }

    pub fn is_ridge_stabilized(&self) -> bool {
        matches!(self.model, Model::Logistic { ridge_stabilized: true, .. })
    }

    /// Linear coefficients where the model has them.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Linear { coef }
            | Model::Polynomial { coef, .. }
            | Model::Logistic { coef, .. } => Some(coef),
            _ => None,
        }
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn check_finite(x: &Matrix, y: &[f64]) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("response contains non-finite values".into()));
    }
    for r in 0..x.rows() {
        if x.row(r).iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit(format!("design row {} contains non-finite values", r)));
        }
    }
    Ok(())
}

/// Least squares via the normal equations. Aliased columns are dropped
/// (coefficient zero) with a warning; `n <= p` is an error.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<FittedLearner> {
    fit_linear(x, y, LearnerKind::Ols, 0.0)
}

/// Ridge-penalized least squares; the first (intercept) column is not
/// penalized.
pub fn fit_ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<FittedLearner> {
    fit_linear(x, y, LearnerKind::Ridge { lambda }, lambda)
}

fn fit_linear(x: &Matrix, y: &[f64], kind: LearnerKind, lambda: f64) -> Result<FittedLearner> {
    if x.rows() != y.len() {
        return Err(Error::Fit("design and response lengths differ".into()));
    }
    if x.rows() <= x.cols() {
        return Err(Error::Fit(format!(
            "need more rows than columns: n={} p={}",
            x.rows(),
            x.cols()
        )));
    }
    check_finite(x, y)?;
    let k = x.cols();
    let mut a = x.xtx();
    if lambda > 0.0 {
        for i in 1..k {
            a[i * k + i] += lambda;
        }
    }
    let b = x.xtwy(y, None);
    let (coef, dropped) = solve_psd(a, b, k);
    let mut warnings = Vec::new();
    if !dropped.is_empty() {
        warnings.push(format!("dropped {} aliased column(s): {:?}", dropped.len(), dropped));
    }
    let p_eff = k - dropped.len();
    let rss: f64 = (0..x.rows()).map(|r| (y[r] - dot(x.row(r), &coef)).powi(2)).sum();
    let dof = x.rows().saturating_sub(p_eff);
    let residual_scale = if dof == 0 { 0.0 } else { (rss.max(0.0) / dof as f64).sqrt() };
    Ok(FittedLearner { kind, model: Model::Linear { coef }, residual_scale, warnings })
}

/// OLS on the design extended by powers 2..=degree of every column.
/// Columns that become aliased under the expansion (binary indicators,
/// the intercept) are dropped silently by the solver.
pub fn fit_polynomial_ols(x: &Matrix, y: &[f64], degree: u32) -> Result<FittedLearner> {
    if degree < 2 {
        return fit_ols(x, y);
    }
    let base = x.cols();
    let total = base * degree as usize;
    let mut flat = Vec::with_capacity(x.rows() * total);
    for r in 0..x.rows() {
        let row = x.row(r);
        flat.extend_from_slice(row);
        for d in 2..=degree {
            for &v in row {
                flat.push(v.powi(d as i32));
            }
        }
    }
    let xe = Matrix::from_flat(flat, x.rows(), total);
    let fitted = fit_linear(&xe, y, LearnerKind::PolynomialOls { degree }, 0.0)?;
    let coef = match fitted.model {
        Model::Linear { coef } => coef,
        _ => unreachable!(),
    };
    Ok(FittedLearner {
        kind: LearnerKind::PolynomialOls { degree },
        model: Model::Polynomial { coef, degree, base_cols: base },
        residual_scale: fitted.residual_scale,
        warnings: fitted.warnings,
    })
}

/// Logistic regression by iteratively reweighted least squares with step
/// halving, so the log-likelihood is nondecreasing across iterations.
/// Converged when the max absolute score drops below 1e-8. Suspected
/// separation triggers a ridge-stabilized refit (penalty 1e-6), flagged.
pub fn fit_logistic(x: &Matrix, y: &[f64]) -> Result<FittedLearner> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Fit("logistic response must be 0/1".into()));
    }
    fit_logistic_impl(x, y, LearnerKind::Logistic)
}

/// Quasi-binomial logistic: the same IRLS with responses anywhere in
/// [0,1], for iterated outcomes of bounded targets.
pub fn fit_fractional_logistic(x: &Matrix, y: &[f64]) -> Result<FittedLearner> {
    if y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Fit("fractional logistic response must lie in [0,1]".into()));
    }
    fit_logistic_impl(x, y, LearnerKind::FractionalLogistic)
}

fn fit_logistic_impl(x: &Matrix, y: &[f64], kind: LearnerKind) -> Result<FittedLearner> {
    if x.rows() != y.len() {
        return Err(Error::Fit("design and response lengths differ".into()));
    }
    check_finite(x, y)?;
    let mean_y = mean(y);
    if !(mean_y > 0.0 && mean_y < 1.0) || y.iter().all(|&v| v == y[0]) {
        return Err(Error::Fit("logistic response has no variation inside (0,1)".into()));
    }

    match irls(x, y, 0.0) {
        IrlsOutcome::Converged { coef, warnings } => Ok(FittedLearner {
            kind,
            model: Model::Logistic { coef, ridge_stabilized: false },
            residual_scale: 0.0,
            warnings,
        }),
        IrlsOutcome::Separation => {
            let stabilized = match irls(x, y, 1e-6) {
                IrlsOutcome::Converged { coef, warnings } => (coef, warnings),
                IrlsOutcome::Separation => {
                    return Err(Error::Fit("logistic IRLS failed even with ridge penalty".into()))
                }
            };
            let mut warnings = stabilized.1;
            warnings.push("separation suspected; ridge-stabilized refit (penalty 1e-6)".into());
            Ok(FittedLearner {
                kind,
                model: Model::Logistic { coef: stabilized.0, ridge_stabilized: true },
                residual_scale: 0.0,
                warnings,
            })
        }
    }
}

enum IrlsOutcome {
    Converged { coef: Vec<f64>, warnings: Vec<String> },
    Separation,
}

fn log_likelihood(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // y*eta - log(1 + exp(eta)), stable in both tails
            let log1pe = if e > 30.0 { e } else { (1.0 + e.exp()).ln() };
            yi * e - log1pe
        })
        .sum()
}

fn irls(x: &Matrix, y: &[f64], penalty: f64) -> IrlsOutcome {
    let n = x.rows();
    let k = x.cols();
    let mut coef = vec![0.0; k];
    let mut eta = vec![0.0; n];
    let mut ll = log_likelihood(&eta, y);

    // runaway linear predictors that classify every observation on the
    // correct side mean the MLE does not exist
    let separated = |eta: &[f64]| -> bool {
        penalty == 0.0
            && eta.iter().any(|e| e.abs() > 30.0)
            && eta.iter().zip(y).all(|(&e, &yi)| (2.0 * yi - 1.0) * e >= -1e-6)
    };

    for _iter in 0..100 {
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut score = vec![0.0; k];
        for r in 0..n {
            let d = y[r] - p[r];
            for (j, &v) in x.row(r).iter().enumerate() {
                score[j] += v * d;
            }
        }
        if penalty > 0.0 {
            for j in 1..k {
                score[j] -= penalty * coef[j];
            }
        }
        let max_score = score.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        if max_score < 1e-8 {
            if separated(&eta) {
                return IrlsOutcome::Separation;
            }
            return IrlsOutcome::Converged { coef, warnings: Vec::new() };
        }

        let w: Vec<f64> = p.iter().map(|&pi| (pi * (1.0 - pi)).max(1e-10)).collect();
        let mut a = x.xtwx(Some(&w));
        if penalty > 0.0 {
            for i in 1..k {
                a[i * k + i] += penalty;
            }
        }
        let (delta, _) = solve_psd(a, score, k);
        if delta.iter().any(|d| !d.is_finite()) {
            return IrlsOutcome::Separation;
        }

        // step halving keeps the (penalized) log-likelihood nondecreasing
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = coef.iter().zip(&delta).map(|(c, d)| c + step * d).collect();
            let cand_eta = x.matvec(&cand);
            let cand_ll = log_likelihood(&cand_eta, y)
                - 0.5 * penalty * cand[1..].iter().map(|c| c * c).sum::<f64>();
            let base_ll = ll - 0.5 * penalty * coef[1..].iter().map(|c| c * c).sum::<f64>();
            if cand_ll >= base_ll - 1e-12 {
                coef = cand;
                eta = cand_eta;
                ll = log_likelihood(&eta, y);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // the likelihood gain has sunk below float noise: a numerical
            // optimum unless the fit is separated
            if separated(&eta) {
                return IrlsOutcome::Separation;
            }
            return IrlsOutcome::Converged { coef, warnings: Vec::new() };
        }
        if penalty == 0.0 && eta.iter().any(|e| e.abs() > 30.0) && max_score > 1e-6 {
            return IrlsOutcome::Separation;
        }
    }
    if separated(&eta) {
        return IrlsOutcome::Separation;
    }
    // iteration cap reached without a separation signature; stopping here
    // is part of the convergence contract (max |score| < 1e-8 or 100
    // iterations)
    IrlsOutcome::Converged { coef, warnings: vec!["IRLS stopped at the iteration cap".into()] }
}

/// Coordinate-descent lasso with internal standardization to unit
/// variance. Lambda selected by 5-fold CV MSE over a geometric path;
/// `lambda_path = Some(&[0.0])` forces the OLS limit. The intercept is
/// unpenalized.
pub fn fit_lasso(
    x: &Matrix,
    y: &[f64],
    lambda_path: Option<&[f64]>,
    seed: u64,
) -> Result<FittedLearner> {
    if x.rows() != y.len() {
        return Err(Error::Fit("design and response lengths differ".into()));
    }
    check_finite(x, y)?;
    let n = x.rows();
    let ybar = mean(y);
    let yvar = y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / n as f64;
    if yvar <= 0.0 {
        return Ok(FittedLearner {
            kind: LearnerKind::Lasso,
            model: Model::Lasso { intercept: ybar, coef: vec![0.0; x.cols()], lambda: f64::INFINITY },
            residual_scale: 0.0,
            warnings: vec!["zero response variance; intercept-only".into()],
        });
    }

    // standardize, skipping the intercept / constant columns
    let k = x.cols();
    let mut means = vec![0.0; k];
    let mut scales = vec![0.0; k];
    for j in 0..k {
        let col = x.column(j);
        let m = mean(&col);
        let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / n as f64;
        means[j] = m;
        scales[j] = v.sqrt();
    }
    let active: Vec<usize> = (0..k).filter(|&j| scales[j] > 1e-12).collect();
    let xs: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| {
            let m = means[j];
            let s = scales[j];
            x.column(j).iter().map(|v| (v - m) / s).collect()
        })
        .collect();
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();

    let path: Vec<f64> = match lambda_path {
        Some(p) if !p.is_empty() => {
            let mut p = p.to_vec();
            p.sort_by(|a, b| b.total_cmp(a));
            p
        }
        _ => {
            let lambda_max = xs
                .iter()
                .map(|col| dot(col, &yc).abs() / n as f64)
                .fold(0.0_f64, f64::max)
                .max(1e-12);
            let lo = lambda_max * 1e-2;
            (0..30)
                .map(|i| lambda_max * (lo / lambda_max).powf(i as f64 / 29.0))
                .collect()
        }
    };

    let lambda = if path.len() == 1 {
        path[0]
    } else {
        select_lambda_cv(&xs, &yc, &path, n, seed)
    };

    let beta_std = lasso_path_fit(&xs, &yc, &path, lambda, n);

    // back-transform to the original scale
    let mut coef = vec![0.0; k];
    let mut intercept = ybar;
    for (idx, &j) in active.iter().enumerate() {
        let b = beta_std[idx] / scales[j];
        coef[j] = b;
        intercept -= b * means[j];
    }
    let rss: f64 =
        (0..n).map(|r| (y[r] - intercept - dot(x.row(r), &coef)).powi(2)).sum();
    let nonzero = coef.iter().filter(|&&c| c != 0.0).count();
    let dof = n.saturating_sub(nonzero + 1).max(1);
    Ok(FittedLearner {
        kind: LearnerKind::Lasso,
        model: Model::Lasso { intercept, coef, lambda },
        residual_scale: (rss.max(0.0) / dof as f64).sqrt(),
        warnings: Vec::new(),
    })
}

/// Precomputed covariance form of a lasso problem: X'X/n and X'y/n over
/// standardized columns, so coordinate updates cost O(p) instead of O(n).
struct LassoGram {
    gram: Vec<f64>,
    xty: Vec<f64>,
    p: usize,
    tol: f64,
}

impl LassoGram {
    fn new(xs: &[Vec<f64>], yc: &[f64], n: usize) -> Self {
        let p = xs.len();
        let mut gram = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        for j in 0..p {
            xty[j] = dot(&xs[j], yc) / n as f64;
            for k in j..p {
                let g = dot(&xs[j], &xs[k]) / n as f64;
                gram[j * p + k] = g;
                gram[k * p + j] = g;
            }
        }
        let y_scale = (yc.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-8);
        LassoGram { gram, xty, p, tol: 1e-7 * y_scale }
    }

    /// Warm-started coordinate descent at `lambda`, with `s[j]` tracking
    /// the running inner products (gram . beta)[j].
    fn descend(&self, beta: &mut [f64], s: &mut [f64], lambda: f64) {
        for _sweep in 0..200 {
            let mut max_delta = 0.0_f64;
            for j in 0..self.p {
                let old = beta[j];
                let diag = self.gram[j * self.p + j].max(1e-12);
                let rho = self.xty[j] - s[j] + diag * old;
                let new = soft_threshold(rho, lambda) / diag;
                if new != old {
                    let d = new - old;
                    let row = &self.gram[j * self.p..(j + 1) * self.p];
                    for (si, g) in s.iter_mut().zip(row) {
                        *si += d * g;
                    }
                    beta[j] = new;
                    max_delta = max_delta.max(d.abs());
                }
            }
            if max_delta < self.tol {
                break;
            }
        }
    }
}

/// Warm-started coordinate descent down the path; returns the solution at
/// `lambda` (standardized scale).
fn lasso_path_fit(xs: &[Vec<f64>], yc: &[f64], path: &[f64], lambda: f64, n: usize) -> Vec<f64> {
    let p = xs.len();
    let mut beta = vec![0.0; p];
    if p == 0 {
        return beta;
    }
    if lambda == 0.0 {
        // exact OLS limit via the normal equations on standardized data
        let mut flat = Vec::with_capacity(n * p);
        for r in 0..n {
            for col in xs {
                flat.push(col[r]);
            }
        }
        let xm = Matrix::from_flat(flat, n, p);
        let (coef, _) = solve_psd(xm.xtx(), xm.xtwy(yc, None), p);
        return coef;
    }
    let gram = LassoGram::new(xs, yc, n);
    let mut s = vec![0.0; p];
    for &lam in path {
        gram.descend(&mut beta, &mut s, lam);
        if lam <= lambda {
            break;
        }
    }
    beta
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

fn select_lambda_cv(xs: &[Vec<f64>], yc: &[f64], path: &[f64], n: usize, seed: u64) -> f64 {
    let folds = 5.min(n);
    let assignment = fold_assignment_canonical(
        &(0..n).map(|r| xs.iter().map(|c| c[r]).collect::<Vec<f64>>()).collect::<Vec<_>>(),
        yc,
        folds,
        seed,
    );
    let mut cv_mse = vec![0.0; path.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&r| assignment[r] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&r| assignment[r] == fold).collect();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let xs_tr: Vec<Vec<f64>> =
            xs.iter().map(|c| train.iter().map(|&r| c[r]).collect()).collect();
        let yc_tr: Vec<f64> = train.iter().map(|&r| yc[r]).collect();
        let nt = train.len();
        let gram = LassoGram::new(&xs_tr, &yc_tr, nt);
        let mut beta = vec![0.0; xs.len()];
        let mut s = vec![0.0; xs.len()];
        for (li, &lam) in path.iter().enumerate() {
            if lam == 0.0 {
                beta = lasso_path_fit(&xs_tr, &yc_tr, &[0.0], 0.0, nt);
            } else {
                gram.descend(&mut beta, &mut s, lam);
            }
            for &r in &test {
                let pred: f64 = xs.iter().zip(&beta).map(|(c, b)| c[r] * b).sum();
                cv_mse[li] += (yc[r] - pred).powi(2);
            }
        }
    }
    let best = cv_mse
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    path[best]
}

/// Boosted depth-1 regression stumps fit to squared-error residuals.
/// Split candidates are quantile-binned (64 bins) for determinism and
/// speed; ties break toward the smaller feature index, then threshold.
pub fn fit_stump_ensemble(
    x: &Matrix,
    y: &[f64],
    rounds: u32,
    shrinkage: f64,
) -> Result<FittedLearner> {
    if x.rows() != y.len() {
        return Err(Error::Fit("design and response lengths differ".into()));
    }
    check_finite(x, y)?;
    let n = x.rows();
    let p = x.cols();
    if n < 2 {
        return Err(Error::Fit("stump ensemble needs at least two rows".into()));
    }

    const BINS: usize = 64;
    // per feature: sorted candidate thresholds and per-row bin assignment
    let mut thresholds: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut bin_of: Vec<Vec<u16>> = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j);
        let mut sorted = col.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.dedup();
        let cand: Vec<f64> = if sorted.len() <= 1 {
            Vec::new()
        } else if sorted.len() <= BINS + 1 {
            sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut c: Vec<f64> = (1..=BINS)
                .map(|k| {
                    let q = k as f64 / (BINS + 1) as f64;
                    sorted[((q * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)]
                })
                .collect();
            c.dedup();
            c
        };
        let bins: Vec<u16> = col
            .iter()
            .map(|&v| cand.partition_point(|&t| t < v) as u16)
            .collect();
        thresholds.push(cand);
        bin_of.push(bins);
    }

    let init = mean(y);
    let mut fitted: Vec<f64> = vec![init; n];
    let mut stumps = Vec::with_capacity(rounds as usize);

    for _round in 0..rounds {
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(yi, fi)| yi - fi).collect();
        let total_sum: f64 = resid.iter().sum();
        let total_n = n as f64;

        let mut best: Option<(f64, usize, usize, f64, f64)> = None; // (gain, feature, cut, left, right)
        for j in 0..p {
            let cand = &thresholds[j];
            if cand.is_empty() {
                continue;
            }
            let nb = cand.len() + 1;
            let mut sums = vec![0.0_f64; nb];
            let mut counts = vec![0.0_f64; nb];
            for (r, &b) in bin_of[j].iter().enumerate() {
                sums[b as usize] += resid[r];
                counts[b as usize] += 1.0;
            }
            let mut left_sum = 0.0;
            let mut left_n = 0.0;
            for cut in 0..cand.len() {
                left_sum += sums[cut];
                left_n += counts[cut];
                let right_n = total_n - left_n;
                if left_n == 0.0 || right_n == 0.0 {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let gain = left_sum * left_sum / left_n + right_sum * right_sum / right_n;
                let better = match best {
                    None => true,
                    Some((g, bj, bc, _, _)) => {
                        gain > g + 1e-12 || (gain > g - 1e-12 && (j, cut) < (bj, bc))
                    }
                };
                if better {
                    best = Some((gain, j, cut, left_sum / left_n, right_sum / right_n));
                }
            }
        }
        let Some((_, j, cut, left, right)) = best else { break };
        let stump = Stump {
            feature: j,
            threshold: thresholds[j][cut],
            left: shrinkage * left,
            right: shrinkage * right,
        };
        for (r, f) in fitted.iter_mut().enumerate() {
            *f += if x.get(r, j) <= stump.threshold { stump.left } else { stump.right };
        }
        stumps.push(stump);
    }

    let rss: f64 = y.iter().zip(&fitted).map(|(yi, fi)| (yi - fi).powi(2)).sum();
    Ok(FittedLearner {
        kind: LearnerKind::RegressionStumpEnsemble { rounds, shrinkage },
        model: Model::Stumps { init, stumps },
        residual_scale: (rss / n as f64).sqrt(),
        warnings: Vec::new(),
    })
}

/// Additive piecewise-linear splines: the base columns enter linearly and
/// every continuous column contributes hinge terms (x - knot)+ at interior
/// quantile knots. Hinge coefficients (slope changes) carry a mild ridge
/// penalty; the fit is linear beyond the boundary knots, so extrapolation
/// continues the boundary slope.
pub fn fit_spline_additive(x: &Matrix, y: &[f64], n_knots: u32) -> Result<FittedLearner> {
    if x.rows() != y.len() {
        return Err(Error::Fit("design and response lengths differ".into()));
    }
    if x.rows() <= x.cols() {
        return Err(Error::Fit(format!(
            "need more rows than columns: n={} p={}",
            x.rows(),
            x.cols()
        )));
    }
    check_finite(x, y)?;
    let n = x.rows();
    let base = x.cols();

    let mut knots: Vec<(usize, f64)> = Vec::new();
    for j in 0..base {
        let mut col = x.column(j);
        col.sort_by(|a, b| a.total_cmp(b));
        col.dedup();
        if col.len() <= 4 {
            continue; // binary / low-cardinality columns stay linear
        }
        let raw = x.column(j);
        let mut sorted = raw;
        sorted.sort_by(|a, b| a.total_cmp(b));
        for k in 1..=n_knots {
            let q = k as f64 / (n_knots + 1) as f64;
            let knot = sorted[((q * (n - 1) as f64).round() as usize).min(n - 1)];
            if knot > sorted[0] && knot < sorted[n - 1] && !knots.contains(&(j, knot)) {
                knots.push((j, knot));
            }
        }
    }

    let total = base + knots.len();
    let mut flat = Vec::with_capacity(n * total);
    for r in 0..n {
        let row = x.row(r);
        flat.extend_from_slice(row);
        for &(j, knot) in &knots {
            flat.push((row[j] - knot).max(0.0));
        }
    }
    let xe = Matrix::from_flat(flat, n, total);
    let mut a = xe.xtx();
    let lambda = 0.01 * n as f64;
    for i in base..total {
        a[i * total + i] += lambda;
    }
    let b = xe.xtwy(y, None);
    let (coef, dropped) = solve_psd(a, b, total);
    let p_eff = total - dropped.len();
    let rss: f64 = (0..n).map(|r| (y[r] - dot(xe.row(r), &coef)).powi(2)).sum();
    let dof = n.saturating_sub(p_eff).max(1);
    Ok(FittedLearner {
        kind: LearnerKind::SplineAdditive { knots: n_knots },
        model: Model::Spline { coef, base_cols: base, knots },
        residual_scale: (rss.max(0.0) / dof as f64).sqrt(),
        warnings: Vec::new(),
    })
}

pub fn fit_mean(y: &[f64]) -> FittedLearner {
    FittedLearner {
        kind: LearnerKind::MeanOnly,
        model: Model::Constant(mean(y)),
        residual_scale: {
            let m = mean(y);
            (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len().max(1) as f64).sqrt()
        },
        warnings: Vec::new(),
    }
}

pub fn fit_median(y: &[f64]) -> FittedLearner {
    FittedLearner {
        kind: LearnerKind::MedianOnly,
        model: Model::Constant(median(y)),
        residual_scale: 0.0,
        warnings: Vec::new(),
    }
}

/// Fit any learner kind on `(x, y)`. `seed` only feeds cross-validation
/// internals (lasso lambda selection).
pub fn fit_learner(kind: LearnerKind, x: &Matrix, y: &[f64], seed: u64) -> Result<FittedLearner> {
    match kind {
        LearnerKind::MeanOnly => Ok(fit_mean(y)),
        LearnerKind::MedianOnly => Ok(fit_median(y)),
        LearnerKind::Ols => fit_ols(x, y),
        LearnerKind::Ridge { lambda } => fit_ridge(x, y, lambda),
        LearnerKind::PolynomialOls { degree } => fit_polynomial_ols(x, y, degree),
        LearnerKind::Lasso => fit_lasso(x, y, None, seed),
        LearnerKind::Logistic => fit_logistic(x, y),
        LearnerKind::RegressionStumpEnsemble { rounds, shrinkage } => {
            fit_stump_ensemble(x, y, rounds, shrinkage)
        }
        LearnerKind::SplineAdditive { knots } => fit_spline_additive(x, y, knots),
        LearnerKind::FractionalLogistic => fit_fractional_logistic(x, y),
    }
}

/// Fold assignment that depends on row *content*, not row order: rows are
/// ranked canonically (lexicographic over response then features) and a
/// seeded shuffle of fold labels is laid over that ranking. Jointly
/// permuting `(x, y)` therefore leaves every row's fold unchanged.
pub fn fold_assignment_canonical(
    rows: &[Vec<f64>],
    y: &[f64],
    folds: usize,
    seed: u64,
) -> Vec<usize> {
    let n = rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        y[a].total_cmp(&y[b]).then_with(|| {
            for (va, vb) in rows[a].iter().zip(rows[b].iter()) {
                let c = va.total_cmp(vb);
                if c != std::cmp::Ordering::Equal {
                    return c;
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    let mut labels: Vec<usize> = (0..n).map(|i| i % folds).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels.shuffle(&mut rng);
    let mut assignment = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = labels[pos];
    }
    assignment
}

/// Same canonical fold assignment, taking the design matrix directly.
pub fn fold_assignment_matrix(x: &Matrix, y: &[f64], folds: usize, seed: u64) -> Vec<usize> {
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| x.row(r).to_vec()).collect();
    fold_assignment_canonical(&rows, y, folds, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ones_matrix(extra: Vec<Vec<f64>>) -> Matrix {
        let n = extra[0].len();
        let p = 1 + extra.len();
        let mut flat = Vec::with_capacity(n * p);
        for r in 0..n {
            flat.push(1.0);
            for col in &extra {
                flat.push(col[r]);
            }
        }
        Matrix::from_flat(flat, n, p)
    }

    #[test]
    fn ols_intercept_only_matches_mean_and_sigma() {
        let x = Matrix::from_flat(vec![1.0, 1.0, 1.0], 3, 1);
        let y = [1.0, 2.0, 3.0];
        let f = fit_ols(&x, &y).unwrap();
        assert!((f.predict_row(&[1.0]) - 2.0).abs() < 1e-12);
        // RSS = 2, n - p = 2
        assert!((f.residual_scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_exact_fit_has_zero_scale() {
        let x = ones_matrix(vec![vec![0.0, 1.0, 2.0, 3.0]]);
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = fit_ols(&x, &y).unwrap();
        assert!(f.residual_scale < 1e-10);
        assert!((f.predict_row(&[1.0, 10.0]) - 21.0).abs() < 1e-9);
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        // oracle: explicit normal-equations solve computed independently
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let beta = [0.5, -1.25, 2.0, 0.75];
        let y: Vec<f64> = (0..n)
            .map(|r| {
                beta[0]
                    + beta[1] * cols[0][r]
                    + beta[2] * cols[1][r]
                    + beta[3] * cols[2][r]
                    + 0.1 * (rng.random::<f64>() - 0.5)
            })
            .collect();
        let x = ones_matrix(cols.clone());
        let f = fit_ols(&x, &y).unwrap();

        // independent dense solve: 4x4 Gaussian elimination written out
        let k = 4;
        let mut a = vec![0.0; k * k];
        let mut b = vec![0.0; k];
        for r in 0..n {
            let row = [1.0, cols[0][r], cols[1][r], cols[2][r]];
            for i in 0..k {
                b[i] += row[i] * y[r];
                for j in 0..k {
                    a[i * k + j] += row[i] * row[j];
                }
            }
        }
        // plain Gauss-Jordan
        let mut aug = vec![0.0; k * (k + 1)];
        for i in 0..k {
            for j in 0..k {
                aug[i * (k + 1) + j] = a[i * k + j];
            }
            aug[i * (k + 1) + k] = b[i];
        }
        for i in 0..k {
            let piv = aug[i * (k + 1) + i];
            for j in 0..=k {
                aug[i * (k + 1) + j] /= piv;
            }
            for r in 0..k {
                if r != i {
                    let f = aug[r * (k + 1) + i];
                    for j in 0..=k {
                        aug[r * (k + 1) + j] -= f * aug[i * (k + 1) + j];
                    }
                }
            }
        }
        let oracle: Vec<f64> = (0..k).map(|i| aug[i * (k + 1) + k]).collect();
        let got = f.coefficients().unwrap();
        for i in 0..k {
            assert!((got[i] - oracle[i]).abs() < 1e-8, "coef {i}: {} vs {}", got[i], oracle[i]);
        }
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 300;
        let cols: Vec<Vec<f64>> =
            (0..4).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|r| cols[0][r] - cols[2][r] + rng.random::<f64>()).collect();
        let x = ones_matrix(cols);
        let f = fit_ols(&x, &y).unwrap();
        let pred = f.predict(&x);
        for j in 0..x.cols() {
            let g: f64 = (0..n).map(|r| x.get(r, j) * (y[r] - pred[r])).sum();
            assert!(g.abs() < 1e-6 * n as f64, "|X^T r|[{j}] = {g}");
        }
    }

    #[test]
    fn ols_rejects_underdetermined() {
        let x = Matrix::from_flat(vec![1.0, 2.0, 1.0, 3.0], 2, 2);
        assert!(fit_ols(&x, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn logistic_intercept_only_recovers_base_rate() {
        let n = 10;
        let x = Matrix::from_flat(vec![1.0; n], n, 1);
        let y = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let f = fit_logistic(&x, &y).unwrap();
        assert!((f.predict_row(&[1.0]) - 0.3).abs() < 1e-8);
    }

    #[test]
    fn logistic_slope_sign_matches_orientation() {
        let xs = vec![-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0];
        let y = [0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let x = ones_matrix(vec![xs]);
        let f = fit_logistic(&x, &y).unwrap();
        assert!(f.coefficients().unwrap()[1] > 0.0);
    }

    #[test]
    fn logistic_beats_true_coefficients_on_grid_oracle() {
        // MLE log-likelihood must be >= the likelihood of the generating
        // coefficients; verify against a coarse 2d grid search oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|&v| {
                let p = sigmoid(-0.5 + 1.2 * v);
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let x = ones_matrix(vec![xs.clone()]);
        let f = fit_logistic(&x, &y).unwrap();
        let ll_of = |b0: f64, b1: f64| -> f64 {
            xs.iter()
                .zip(&y)
                .map(|(&v, &yi)| {
                    let e = b0 + b1 * v;
                    yi * e - if e > 30.0 { e } else { (1.0 + e.exp()).ln() }
                })
                .sum()
        };
        let c = f.coefficients().unwrap();
        let ll_fit = ll_of(c[0], c[1]);
        let mut best_grid = f64::NEG_INFINITY;
        for i in 0..=40 {
            for j in 0..=40 {
                let b0 = -2.0 + i as f64 * 0.1;
                let b1 = -1.0 + j as f64 * 0.1;
                best_grid = best_grid.max(ll_of(b0, b1));
            }
        }
        assert!(ll_fit >= ll_of(-0.5, 1.2) - 1e-9);
        assert!(ll_fit >= best_grid - 1e-6);
    }

    #[test]
    fn logistic_separation_gets_stabilized() {
        let xs = vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let x = ones_matrix(vec![xs]);
        let f = fit_logistic(&x, &y).unwrap();
        assert!(f.is_ridge_stabilized());
        let p = f.predict_row(&[1.0, 2.0]);
        assert!(p > 0.5 && p < 1.0);
    }

    #[test]
    fn logistic_single_class_is_error() {
        let x = Matrix::from_flat(vec![1.0; 4], 4, 1);
        assert!(fit_logistic(&x, &[1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn lasso_infinite_lambda_kills_slopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let c1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = c1.iter().map(|v| 2.0 * v + rng.random::<f64>()).collect();
        let x = ones_matrix(vec![c1]);
        let f = fit_lasso(&x, &y, Some(&[1e6]), 0).unwrap();
        assert!(f.nonzero_set().unwrap().is_empty());
    }

    #[test]
    fn lasso_zero_lambda_matches_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 120;
        let cols: Vec<Vec<f64>> =
            (0..3).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|r| 1.0 + cols[0][r] - 2.0 * cols[1][r] + 0.5 * cols[2][r] + 0.05 * rng.random::<f64>())
            .collect();
        let x = ones_matrix(cols);
        let ols = fit_ols(&x, &y).unwrap();
        let lasso = fit_lasso(&x, &y, Some(&[0.0]), 0).unwrap();
        for r in 0..5 {
            let d = (ols.predict_row(x.row(r)) - lasso.predict_row(x.row(r))).abs();
            assert!(d < 1e-6, "row {r}: {d}");
        }
    }

    #[test]
    fn lasso_orthonormal_soft_threshold_oracle() {
        // On orthonormal columns the lasso solution is the soft threshold
        // of the OLS coefficients at lambda.
        let n = 64;
        let mut c1 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for i in 0..n {
            // orthogonal sign patterns with unit per-row variance
            c1[i] = if i % 2 == 0 { 1.0 } else { -1.0 };
            c2[i] = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
        }
        let y: Vec<f64> = (0..n).map(|i| 0.9 * c1[i] + 0.15 * c2[i]).collect();
        let x = ones_matrix(vec![c1.clone(), c2.clone()]);
        let lambda = 0.3;
        let f = fit_lasso(&x, &y, Some(&[lambda]), 0).unwrap();
        // standardized columns equal themselves (unit variance, zero mean)
        let ols_b1 = dot(&c1, &y) / n as f64;
        let ols_b2 = dot(&c2, &y) / n as f64;
        let expect1 = soft_threshold(ols_b1, lambda);
        let expect2 = soft_threshold(ols_b2, lambda);
        let got = match &f.model {
            Model::Lasso { coef, .. } => coef.clone(),
            _ => unreachable!(),
        };
        assert!((got[1] - expect1).abs() < 1e-6, "{} vs {expect1}", got[1]);
        assert!((got[2] - expect2).abs() < 1e-6, "{} vs {expect2}", got[2]);
    }

    #[test]
    fn lasso_constant_response_is_intercept_only() {
        let x = ones_matrix(vec![vec![1.0, 2.0, 3.0, 4.0]]);
        let f = fit_lasso(&x, &[5.0, 5.0, 5.0, 5.0], None, 0).unwrap();
        assert_eq!(f.predict_row(&[1.0, 9.0]), 5.0);
    }

    #[test]
    fn stumps_fit_step_function() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = xs.iter().map(|&v| if v < 5.0 { 0.0 } else { 3.0 }).collect();
        let x = ones_matrix(vec![xs]);
        let f = fit_stump_ensemble(&x, &y, 100, 0.1).unwrap();
        assert!((f.predict_row(&[1.0, 1.0]) - 0.0).abs() < 0.05);
        assert!((f.predict_row(&[1.0, 9.0]) - 3.0).abs() < 0.05);
    }

    #[test]
    fn fold_assignment_invariant_to_joint_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let base = fold_assignment_canonical(&rows, &y, 5, 7);

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let rows_p: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let y_p: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let shuffled = fold_assignment_canonical(&rows_p, &y_p, 5, 7);
        for (new_pos, &orig) in perm.iter().enumerate() {
            assert_eq!(shuffled[new_pos], base[orig]);
        }
    }
}

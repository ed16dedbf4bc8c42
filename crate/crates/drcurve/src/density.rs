//! Conditional treatment-density estimators, evaluable at arbitrary
//! intervention values. Two strategies: a parametric Gaussian regression
//! (normal density around a least-squares mean) and a binning strategy
//! (one-vs-rest logistic per bin, probabilities renormalized, density =
//! probability / bin width).

use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::design::{DesignInfo, Expansion};
use crate::error::{Error, Result};
use crate::learners::{fit_logistic, fit_ols, FittedLearner};

/// Density value cap at a point mass; keeps weights finite while
/// preserving ordering.
pub const POINT_MASS_CAP: f64 = 1e12;

const SQRT_2PI: f64 = 2.5066282746310002;

pub fn normal_pdf(a: f64, mu: f64, sigma: f64) -> f64 {
    let z = (a - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * SQRT_2PI)
}

/// How bins are laid out for the binning strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinLayout {
    /// Equal-frequency bins from observed target quantiles.
    EqualFrequency { bins: usize },
    /// Bins centered at the given (ascending) values with edges at
    /// midpoints; outermost bins extend to infinity for membership, with
    /// a symmetric nominal width for the density denominator.
    Aligned { centers: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityStrategy {
    GaussianRegression,
    Binning,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum DensityCore {
    Gaussian {
        mean_model: FittedLearner,
        sigma: f64,
    },
    Binning {
        /// Interior edges (ascending); bin k covers [edges[k-1], edges[k]).
        edges: Vec<f64>,
        widths: Vec<f64>,
        /// One membership model per bin: logistic, or a constant for
        /// single-class bins.
        models: Vec<BinModel>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum BinModel {
    Logistic(FittedLearner),
    Constant(f64),
}

/// Fitted conditional density g(A | conditioning set).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalDensityModel {
    pub strategy: DensityStrategy,
    pub target_name: String,
    pub conditioning_names: Vec<String>,
    design: DesignInfo,
    core: DensityCore,
    /// Observed range of the target.
    pub support: (f64, f64),
    pub point_mass: bool,
}

/// One density evaluation with provenance flags.
#[derive(Debug, Clone, Copy)]
pub struct DensityEval {
    pub value: f64,
    /// `a` fell outside the observed support range.
    pub extrapolated: bool,
    /// The fitted density is a point mass and the cap rule applied.
    pub point_mass: bool,
}

/// Fit g(target | conditioning) over `rows`. Empty conditioning gives the
/// marginal density (intercept-only). Requires n >= 20.
pub fn fit_density(
    data: &LongitudinalDataset,
    rows: &[usize],
    target_col: usize,
    conditioning: &[usize],
    strategy: DensityStrategy,
    layout: &BinLayout,
    expansion: Expansion,
) -> Result<ConditionalDensityModel> {
    if rows.len() < 20 {
        return Err(Error::Fit(format!(
            "density for '{}' needs at least 20 rows, got {}",
            data.columns()[target_col].name,
            rows.len()
        )));
    }
    if conditioning.iter().any(|&c| c >= target_col) {
        return Err(Error::Fit(
            "conditioning columns must temporally precede the density target".into(),
        ));
    }
    let design = DesignInfo::fit(data, rows, conditioning, expansion, None)?;
    let x = design.matrix(data, rows, &[]);
    let y: Vec<f64> = rows.iter().map(|&r| data.value(r, target_col)).collect();
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let core = match strategy {
        DensityStrategy::GaussianRegression => {
            let mean_model = fit_ols(&x, &y)?;
            let sigma = mean_model.residual_scale;
            DensityCore::Gaussian { mean_model, sigma }
        }
        DensityStrategy::Binning => {
            let (edges, widths) = bin_edges(layout, &y)?;
            let n_bins = widths.len();
            let mut models = Vec::with_capacity(n_bins);
            for k in 0..n_bins {
                let membership: Vec<f64> = y
                    .iter()
                    .map(|&v| if bin_of(&edges, v) == k { 1.0 } else { 0.0 })
                    .collect();
                let ones = membership.iter().filter(|&&v| v == 1.0).count();
                if ones == 0 {
                    models.push(BinModel::Constant(0.0));
                } else if ones == membership.len() {
                    models.push(BinModel::Constant(1.0));
                } else {
                    models.push(BinModel::Logistic(fit_logistic(&x, &membership)?));
                }
            }
            DensityCore::Binning { edges, widths, models }
        }
    };

    let point_mass = matches!(&core, DensityCore::Gaussian { sigma, .. } if *sigma <= 0.0);
    Ok(ConditionalDensityModel {
        strategy,
        target_name: data.columns()[target_col].name.clone(),
        conditioning_names: design.names.clone(),
        design,
        core,
        support: (lo, hi),
        point_mass,
    })
}

/// Interior edges + nominal widths for a layout over observed values.
fn bin_edges(layout: &BinLayout, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    match layout {
        BinLayout::Aligned { centers } => {
            if centers.is_empty() {
                return Err(Error::Fit("aligned bin layout needs at least one center".into()));
            }
            let mut c = centers.clone();
            c.sort_by(|a, b| a.total_cmp(b));
            c.dedup();
            if c.len() == 1 {
                // degenerate single bin: unit nominal width so the density
                // equals the bin probability
                return Ok((Vec::new(), vec![1.0]));
            }
            let edges: Vec<f64> = c.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            let mut widths = Vec::with_capacity(c.len());
            for k in 0..c.len() {
                let w = if k == 0 {
                    c[1] - c[0]
                } else if k == c.len() - 1 {
                    c[k] - c[k - 1]
                } else {
                    edges[k] - edges[k - 1]
                };
                widths.push(w);
            }
            Ok((edges, widths))
        }
        BinLayout::EqualFrequency { bins } => {
            let b = (*bins).max(2);
            let mut sorted = y.to_vec();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let n = sorted.len();
            let mut edges: Vec<f64> = (1..b)
                .map(|k| sorted[(k * n / b).min(n - 1)])
                .collect();
            edges.dedup();
            let lo = sorted[0];
            let hi = sorted[n - 1];
            if edges.is_empty() || hi <= lo {
                return Ok((Vec::new(), vec![1.0]));
            }
            let mut widths = Vec::with_capacity(edges.len() + 1);
            for k in 0..=edges.len() {
                let left = if k == 0 { lo } else { edges[k - 1] };
                let right = if k == edges.len() { hi } else { edges[k] };
                widths.push((right - left).max(1e-12));
            }
            Ok((edges, widths))
        }
    }
}

fn bin_of(edges: &[f64], a: f64) -> usize {
    edges.partition_point(|&e| e <= a)
}

impl ConditionalDensityModel {
    /// Number of bins (binning strategy).
    pub fn n_bins(&self) -> usize {
        match &self.core {
            DensityCore::Binning { widths, .. } => widths.len(),
            _ => 0,
        }
    }

    /// Evaluate the density at `a` for dataset row `row`, with overrides
    /// plugging intervened values into the conditioning set.
    pub fn evaluate(
        &self,
        data: &LongitudinalDataset,
        row: usize,
        a: f64,
        overrides: &[(usize, f64)],
    ) -> DensityEval {
        let x = self.design.row(data, row, overrides);
        self.evaluate_design_row(&x, a)
    }

    /// Evaluate for many rows at once.
    pub fn evaluate_rows(
        &self,
        data: &LongitudinalDataset,
        rows: &[usize],
        a: f64,
        overrides: &[(usize, f64)],
    ) -> Vec<DensityEval> {
        rows.iter().map(|&r| self.evaluate(data, r, a, overrides)).collect()
    }

    fn evaluate_design_row(&self, x: &[f64], a: f64) -> DensityEval {
        let extrapolated = a < self.support.0 || a > self.support.1;
        match &self.core {
            DensityCore::Gaussian { mean_model, sigma } => {
                let mu = mean_model.predict_row(x);
                if *sigma <= 0.0 {
                    let hit = (a - mu).abs() <= 1e-9 * mu.abs().max(1.0);
                    DensityEval {
                        value: if hit { POINT_MASS_CAP } else { 0.0 },
                        extrapolated,
                        point_mass: true,
                    }
                } else {
                    DensityEval { value: normal_pdf(a, mu, *sigma), extrapolated, point_mass: false }
                }
            }
            DensityCore::Binning { edges, widths, models } => {
                let k = bin_of(edges, a);
                let probs: Vec<f64> = models
                    .iter()
                    .map(|m| match m {
                        BinModel::Logistic(f) => f.predict_row(x),
                        BinModel::Constant(p) => *p,
                    })
                    .collect();
                let total: f64 = probs.iter().sum();
                let p = if total > 0.0 { probs[k] / total } else { 0.0 };
                DensityEval { value: p / widths[k], extrapolated, point_mass: false }
            }
        }
    }

    /// Normalized per-bin probabilities for a row (binning strategy).
    pub fn bin_probabilities(
        &self,
        data: &LongitudinalDataset,
        row: usize,
        overrides: &[(usize, f64)],
    ) -> Option<Vec<f64>> {
        match &self.core {
            DensityCore::Binning { models, .. } => {
                let x = self.design.row(data, row, overrides);
                let probs: Vec<f64> = models
                    .iter()
                    .map(|m| match m {
                        BinModel::Logistic(f) => f.predict_row(&x),
                        BinModel::Constant(p) => *p,
                    })
                    .collect();
                let total: f64 = probs.iter().sum();
                if total > 0.0 {
                    Some(probs.iter().map(|p| p / total).collect())
                } else {
                    Some(probs)
                }
            }
            _ => None,
        }
    }

    /// JSON representation (strategy, coefficients, bin edges).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

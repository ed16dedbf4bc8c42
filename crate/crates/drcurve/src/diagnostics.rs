//! Positivity diagnostics: weight-proportion surfaces over (c,
//! intervention, time) and the binned conditional-support estimator
//! ("probability of approximately following the strategy, given one has
//! followed it so far").

use serde::{Deserialize, Serialize};

use crate::data::{InterventionGrid, LongitudinalDataset, Role};
use crate::design::{DesignInfo, Expansion};
use crate::error::{Error, Result};
use crate::learners::fit_logistic;
use crate::weights::TrajectoryWeightRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    WeightProportion,
    BinnedSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportFlag {
    Ok,
    /// Fewer than 10 followers; reported as an empirical proportion.
    SmallSample,
    NoFollowers,
}

/// Shading category with the fixed cut points (>50%, 15-50%, 5-15%, <5%).
pub fn shading_category(proportion: f64) -> &'static str {
    if proportion > 0.5 {
        ">50%"
    } else if proportion > 0.15 {
        "15-50%"
    } else if proportion > 0.05 {
        "5-15%"
    } else {
        "<5%"
    }
}

/// A diagnostic surface over (c x trajectory x time) or (trajectory x
/// time).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportSurface {
    pub kind: SurfaceKind,
    /// Empty for binned support.
    pub c_grid: Vec<f64>,
    pub labels: Vec<String>,
    pub times: Vec<usize>,
    /// `cells[ci][j][ti]`; binned support uses a single `ci = 0` layer.
    pub cells: Vec<Vec<Vec<f64>>>,
    /// Proportion averaged over all visits: `visit_averaged[ci][j]`
    /// (weight proportion only).
    pub visit_averaged: Option<Vec<Vec<f64>>>,
    /// Follower counts per (trajectory, time) (binned support only).
    pub followers: Option<Vec<Vec<usize>>>,
    pub flags: Option<Vec<Vec<SupportFlag>>>,
}

impl SupportSurface {
    pub fn cell(&self, ci: usize, j: usize, ti: usize) -> f64 {
        self.cells[ci][j][ti]
    }

    /// CSV (weight proportion): c, trajectory_label, time, proportion,
    /// category — plus visit-averaged rows with time = "all".
    pub fn write_weight_proportion_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["c", "trajectory_label", "time", "proportion", "category"])?;
        for (ci, &c) in self.c_grid.iter().enumerate() {
            for (j, label) in self.labels.iter().enumerate() {
                for (ti, &t) in self.times.iter().enumerate() {
                    let p = self.cells[ci][j][ti];
                    w.write_record([
                        c.to_string(),
                        label.clone(),
                        t.to_string(),
                        p.to_string(),
                        shading_category(p).to_string(),
                    ])?;
                }
                if let Some(avg) = &self.visit_averaged {
                    let p = avg[ci][j];
                    w.write_record([
                        c.to_string(),
                        label.clone(),
                        "all".to_string(),
                        p.to_string(),
                        shading_category(p).to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// CSV (binned support): trajectory_label, time, support, followers,
    /// flag.
    pub fn write_binned_support_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trajectory_label", "time", "support", "followers", "flag"])?;
        let followers = self
            .followers
            .as_ref()
            .ok_or_else(|| Error::Args("binned-support CSV requires a binned surface".into()))?;
        let flags = self.flags.as_ref().unwrap();
        for (j, label) in self.labels.iter().enumerate() {
            for (ti, &t) in self.times.iter().enumerate() {
                let flag = match flags[j][ti] {
                    SupportFlag::Ok => "ok",
                    SupportFlag::SmallSample => "small_sample",
                    SupportFlag::NoFollowers => "no_followers",
                };
                w.write_record([
                    label.clone(),
                    t.to_string(),
                    self.cells[0][j][ti].to_string(),
                    followers[j][ti].to_string(),
                    flag.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Proportion of weights different from one per (c, trajectory, time),
/// recomputed from the stored numerators (no refit). Also reports the
/// visit-averaged variant.
pub fn weight_proportion_surface(
    records: &[TrajectoryWeightRecord],
    c_grid: &[f64],
    grid: &InterventionGrid,
) -> Result<SupportSurface> {
    if records.is_empty() {
        return Err(Error::Args("no weight records to summarize".into()));
    }
    if c_grid.is_empty() {
        return Err(Error::Args("empty c grid".into()));
    }
    let mut times: Vec<usize> = records.iter().map(|r| r.record.time).collect();
    times.sort_unstable();
    times.dedup();
    let n_a = grid.n_trajectories();
    let labels: Vec<String> = (0..n_a).map(|j| grid.label(j).to_string()).collect();

    let mut cells = vec![vec![vec![0.0; times.len()]; n_a]; c_grid.len()];
    let mut counts = vec![vec![0usize; times.len()]; n_a];
    let mut nums: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); times.len()]; n_a];
    for r in records {
        let ti = times.iter().position(|&t| t == r.record.time).unwrap();
        nums[r.trajectory][ti].push(r.record.numerator);
        counts[r.trajectory][ti] += 1;
    }
    for (ci, &c) in c_grid.iter().enumerate() {
        for j in 0..n_a {
            for ti in 0..times.len() {
                if counts[j][ti] == 0 {
                    cells[ci][j][ti] = f64::NAN;
                    continue;
                }
                let non_unit = nums[j][ti].iter().filter(|&&num| !(num > c)).count();
                cells[ci][j][ti] = non_unit as f64 / counts[j][ti] as f64;
            }
        }
    }
    let visit_averaged: Vec<Vec<f64>> = (0..c_grid.len())
        .map(|ci| {
            (0..n_a)
                .map(|j| {
                    let vals: Vec<f64> = (0..times.len())
                        .map(|ti| cells[ci][j][ti])
                        .filter(|v| !v.is_nan())
                        .collect();
                    vals.iter().sum::<f64>() / vals.len().max(1) as f64
                })
                .collect()
        })
        .collect();

    Ok(SupportSurface {
        kind: SurfaceKind::WeightProportion,
        c_grid: c_grid.to_vec(),
        labels,
        times,
        cells,
        visit_averaged: Some(visit_averaged),
        followers: None,
        flags: None,
    })
}

/// Options for the binned-support estimator.
#[derive(Debug, Clone, Default)]
pub struct BinnedSupportOptions {
    /// Regress bin membership on the covariate history among followers and
    /// average fitted probabilities over all units, instead of the
    /// marginal (intercept-only) version.
    pub covariate_adjusted: bool,
}

/// Half-open bin around the j-th sorted grid value: edges at midpoints to
/// the neighboring grid values, outermost bins extended to infinity.
fn value_bin(sorted_values: &[f64], j: usize) -> (f64, f64) {
    let lo = if j == 0 {
        f64::NEG_INFINITY
    } else {
        0.5 * (sorted_values[j - 1] + sorted_values[j])
    };
    let hi = if j + 1 == sorted_values.len() {
        f64::INFINITY
    } else {
        0.5 * (sorted_values[j] + sorted_values[j + 1])
    };
    (lo, hi)
}

/// Binned conditional support: P(A_t in bin_j(t) | followed strategy j
/// through t-1), estimated among followers; below 10 followers the
/// empirical proportion is reported with a flag.
pub fn binned_support(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
) -> Result<SupportSurface> {
    binned_support_with(data, grid, &BinnedSupportOptions::default())
}

pub fn binned_support_with(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
    options: &BinnedSupportOptions,
) -> Result<SupportSurface> {
    if grid.n_trajectories() < 2 {
        return Err(Error::Args("binned support needs at least two trajectories".into()));
    }
    if grid.horizon() != data.t_max() + 1 {
        return Err(Error::Args("grid horizon does not match the dataset".into()));
    }
    let t_max = data.t_max();
    let n = data.n_rows();
    let n_a = grid.n_trajectories();

    // per time point: each trajectory's bin around its own grid value
    let mut bins: Vec<Vec<(f64, f64)>> = Vec::with_capacity(t_max + 1); // [t][j]
    for t in 0..=t_max {
        let mut values: Vec<f64> = (0..n_a).map(|j| grid.trajectory(j)[t]).collect();
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.dedup();
        let per_traj: Vec<(f64, f64)> = values
            .drain(..)
            .map(|v| {
                let pos = sorted.iter().position(|&s| s == v).unwrap();
                value_bin(&sorted, pos)
            })
            .collect();
        bins.push(per_traj);
    }

    let in_bin = |r: usize, t: usize, j: usize| -> bool {
        let a = data.value(r, data.treatment_col(t));
        if a.is_nan() {
            return false;
        }
        let (lo, hi) = bins[t][j];
        a >= lo && a < hi
    };

    let mut cells = vec![vec![vec![0.0; t_max + 1]; n_a]];
    let mut followers_out = vec![vec![0usize; t_max + 1]; n_a];
    let mut flags = vec![vec![SupportFlag::Ok; t_max + 1]; n_a];

    for j in 0..n_a {
        let mut followers: Vec<usize> = (0..n).collect();
        for t in 0..=t_max {
            followers_out[j][t] = followers.len();
            if followers.is_empty() {
                cells[0][j][t] = 0.0;
                flags[j][t] = SupportFlag::NoFollowers;
                continue;
            }
            let membership: Vec<f64> = followers
                .iter()
                .map(|&r| if in_bin(r, t, j) { 1.0 } else { 0.0 })
                .collect();
            let prop = membership.iter().sum::<f64>() / membership.len() as f64;
            if followers.len() < 10 {
                cells[0][j][t] = prop;
                flags[j][t] = SupportFlag::SmallSample;
            } else if prop == 0.0 || prop == 1.0 {
                // degenerate membership: the logistic intercept has no MLE
                cells[0][j][t] = prop;
            } else {
                let support = if options.covariate_adjusted {
                    let a_col = data.treatment_col(t);
                    let cov_cols: Vec<usize> = (0..a_col)
                        .filter(|&c| {
                            matches!(
                                data.columns()[c].role,
                                Role::BaselineCovariate | Role::TimeCovariate
                            )
                        })
                        .collect();
                    let design =
                        DesignInfo::fit(data, &followers, &cov_cols, Expansion::Linear, None)?;
                    let x = design.matrix(data, &followers, &[]);
                    let model = fit_logistic(&x, &membership)?;
                    // mean fitted probability over every unit's covariates
                    let all: Vec<usize> = (0..n).collect();
                    let xa = design.matrix(data, &all, &[]);
                    let preds = model.predict(&xa);
                    preds.iter().sum::<f64>() / preds.len() as f64
                } else {
                    // logistic regression on an intercept among followers;
                    // the mean fitted probability is the follower proportion
                    let x = crate::linalg::Matrix::from_flat(
                        vec![1.0; followers.len()],
                        followers.len(),
                        1,
                    );
                    let model = fit_logistic(&x, &membership)?;
                    model.predict_row(&[1.0])
                };
                cells[0][j][t] = support;
            }
            followers.retain(|&r| in_bin(r, t, j));
        }
    }

    Ok(SupportSurface {
        kind: SurfaceKind::BinnedSupport,
        c_grid: Vec::new(),
        labels: (0..n_a).map(|j| grid.label(j).to_string()).collect(),
        times: (0..=t_max).collect(),
        cells,
        visit_averaged: None,
        followers: Some(followers_out),
        flags: Some(flags),
    })
}

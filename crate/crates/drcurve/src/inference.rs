//! Nonparametric bootstrap confidence bands: unit-level resampling, the
//! full pipeline (density fits, weights, regressions) rerun per replicate,
//! percentile intervals per (trajectory, time).
//!
//! Replicate r depends only on (seed, r), so replicates run in parallel
//! with bit-identical aggregate results regardless of scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{CurveEstimate, InterventionGrid, LongitudinalDataset};
use crate::error::{Error, Result};
use crate::gcomp::{self, EstimatorConfig};
use crate::util::split_seed_n;

const TAG_BOOT: u64 = 0xb0;

/// Percentile bands per (trajectory, time), plus the replicate draws.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub b: usize,
    pub level: f64,
    /// Point estimate on the original data.
    pub point: CurveEstimate,
    /// Replicate values: `replicates[r][j][t]` (NaN where undefined or
    /// failed).
    pub replicates: Vec<Vec<Vec<f64>>>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// Fraction of replicates undefined (or failed) per cell.
    pub undefined_rate: Vec<Vec<f64>>,
    /// More than 20% of replicates undefined at the cell.
    pub unreliable: Vec<Vec<bool>>,
}

impl BootstrapResult {
    /// CSV: trajectory_label, time, estimate, lower, upper, undefined_rate.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "trajectory_label",
            "time",
            "estimate",
            "lower",
            "upper",
            "undefined_rate",
            "unreliable",
        ])?;
        for (j, label) in self.point.labels.iter().enumerate() {
            for t in 0..self.lower[j].len() {
                if self.point.values[j][t].is_nan() && !self.point.undefined[j][t] {
                    continue;
                }
                w.write_record([
                    label.clone(),
                    t.to_string(),
                    self.point.values[j][t].to_string(),
                    self.lower[j][t].to_string(),
                    self.upper[j][t].to_string(),
                    self.undefined_rate[j][t].to_string(),
                    if self.unreliable[j][t] { "1" } else { "0" }.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Interpolated percentile of a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Run the bootstrap: resample n units with replacement, rerun the whole
/// estimator pipeline per replicate, report percentile bands at
/// (1-level)/2 tails. Cells where more than 20% of replicates are
/// undefined are flagged unreliable.
pub fn bootstrap(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
    config: &EstimatorConfig,
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapResult> {
    if b < 50 {
        return Err(Error::Args(format!("bootstrap needs B >= 50, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Args(format!("level must lie in (0,1), got {level}")));
    }
    let point = gcomp::estimate(data, grid, config)?;
    let n = data.n_rows();
    let n_a = grid.n_trajectories();
    let n_t = point.values[0].len();

    let replicates: Vec<Vec<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed_n(seed, &[TAG_BOOT, r as u64]));
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let resampled = data.resample(&indices);
            let mut cfg = config.clone();
            cfg.seed = split_seed_n(seed, &[TAG_BOOT, 1, r as u64]);
            match gcomp::estimate(&resampled, grid, &cfg) {
                Ok(curve) => (0..n_a)
                    .map(|j| {
                        (0..n_t)
                            .map(|t| {
                                if curve.undefined[j][t] {
                                    f64::NAN
                                } else {
                                    curve.values[j][t]
                                }
                            })
                            .collect()
                    })
                    .collect(),
                Err(_) => vec![vec![f64::NAN; n_t]; n_a],
            }
        })
        .collect();

    let alpha = 1.0 - level;
    let mut lower = vec![vec![f64::NAN; n_t]; n_a];
    let mut upper = vec![vec![f64::NAN; n_t]; n_a];
    let mut undefined_rate = vec![vec![0.0; n_t]; n_a];
    let mut unreliable = vec![vec![false; n_t]; n_a];
    for j in 0..n_a {
        for t in 0..n_t {
            if point.values[j][t].is_nan() && !point.undefined[j][t] {
                continue; // cell not estimated (target-time subset)
            }
            let mut vals: Vec<f64> = replicates
                .iter()
                .map(|rep| rep[j][t])
                .filter(|v| !v.is_nan())
                .collect();
            vals.sort_by(|a, c| a.total_cmp(c));
            let n_undef = b - vals.len();
            undefined_rate[j][t] = n_undef as f64 / b as f64;
            unreliable[j][t] = undefined_rate[j][t] > 0.2;
            lower[j][t] = percentile(&vals, alpha / 2.0);
            upper[j][t] = percentile(&vals, 1.0 - alpha / 2.0);
        }
    }

    Ok(BootstrapResult { b, level, point, replicates, lower, upper, undefined_rate, unreliable })
}

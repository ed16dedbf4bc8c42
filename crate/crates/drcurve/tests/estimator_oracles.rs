//! Oracle-backed estimator checks that go beyond unit scope: bootstrap
//! coverage and width behavior, the weighted/sequential limit identity on
//! simulated data, and density evaluation against known coefficients.

use drcurve::dgp::{self, SystemId};
use drcurve::gcomp::{self, EstimatorConfig, LearnerStackSpec};
use drcurve::inference::bootstrap;
use drcurve::learners::LearnerKind;
use drcurve::weights::{WeightPlan, WeightVariant};
use drcurve::{DensityStrategy, InterventionGrid};
use rayon::prelude::*;

fn ols_only(seed: u64) -> EstimatorConfig {
    let mut cfg = EstimatorConfig::sequential(seed);
    cfg.stack = LearnerStackSpec::of(&[LearnerKind::Ols], 5);
    cfg
}

/// Percentile bands cover the counterfactual truth at the grid center in
/// at least 90% of 50 outer repetitions (B=200, n=1000, t=1).
#[test]
fn bootstrap_bands_cover_truth_at_grid_center() {
    let grid = InterventionGrid::constant(&[6.0], 2).unwrap();
    let truth = dgp::counterfactual_truth(SystemId::Sim1, &grid, 1_000_000, 5).unwrap();
    let target = truth.value(0, 1);

    let covered: usize = (0..50u64)
        .into_par_iter()
        .map(|rep| {
            let data = dgp::simulate(SystemId::Sim1, 1000, 60_000 + rep).unwrap();
            let mut cfg = ols_only(17 + rep);
            cfg.target_times = Some(vec![1]);
            let res = bootstrap(&data, &grid, &cfg, 200, 0.95, 90_000 + rep).unwrap();
            (res.lower[0][1] <= target && target <= res.upper[0][1]) as usize
        })
        .sum();
    assert!(covered >= 45, "bands covered the truth in only {covered}/50 repetitions");
}

/// Band widths shrink with the sample size: median width at n=4000 below
/// the median at n=1000 over 20 repetitions.
#[test]
fn bootstrap_band_width_shrinks_with_n() {
    let grid = InterventionGrid::constant(&[6.0], 2).unwrap();
    let median_width = |n: usize| -> f64 {
        let mut widths: Vec<f64> = (0..20u64)
            .into_par_iter()
            .map(|rep| {
                let data = dgp::simulate(SystemId::Sim1, n, 70_000 + rep).unwrap();
                let mut cfg = ols_only(3 + rep);
                cfg.target_times = Some(vec![1]);
                let res = bootstrap(&data, &grid, &cfg, 100, 0.95, 80_000 + rep).unwrap();
                res.upper[0][1] - res.lower[0][1]
            })
            .collect();
        widths.sort_by(|a, b| a.total_cmp(b));
        0.5 * (widths[9] + widths[10])
    };
    let w1000 = median_width(1000);
    let w4000 = median_width(4000);
    assert!(
        w4000 < w1000,
        "median band width did not shrink: n=1000 {w1000:.4}, n=4000 {w4000:.4}"
    );
}

/// With c -> 0 and strictly positive numerators every weight is one and
/// the weighted estimator reproduces sequential g-computation bit for bit
/// under the same seeds.
#[test]
fn weighted_c_to_zero_matches_sequential_bitwise_on_sim1() {
    let data = dgp::simulate(SystemId::Sim1, 800, 41).unwrap();
    let grid = SystemId::Sim1.default_grid();
    let cfg = ols_only(7);
    let seq = gcomp::estimate_cdrc_sequential(&data, &grid, &cfg).unwrap();

    let mut wcfg = cfg.clone();
    wcfg.estimand = drcurve::EstimandKind::Weighted;
    wcfg.weights = Some(WeightPlan::new(1e-300, WeightVariant::Simple).unwrap());
    let run = gcomp::estimate_weighted(&data, &grid, &wcfg).unwrap();
    assert!(run.records.iter().all(|r| r.record.branch.is_unit()));
    for j in 0..grid.n_trajectories() {
        for t in 0..=2 {
            assert_eq!(
                seq.value(j, t).to_bits(),
                run.curve.value(j, t).to_bits(),
                "cell ({j},{t}) differs"
            );
        }
    }
}

/// Density oracle from the printed coefficients: A_0 ~ N(7 + L1 + 0.7 L2, 1),
/// so the fitted conditional density at a=7 given L1 = L2 = 0 is the
/// standard normal peak.
#[test]
fn sim1_density_matches_true_coefficients() {
    let data = dgp::simulate(SystemId::Sim1, 10_000, 3).unwrap();
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let a0 = data.column_index("a_0").unwrap();
    let l1 = data.column_index("l1_0").unwrap();
    let l2 = data.column_index("l2_0").unwrap();
    let model = drcurve::fit_density(
        &data,
        &rows,
        a0,
        &[l1, l2],
        DensityStrategy::GaussianRegression,
        &drcurve::BinLayout::EqualFrequency { bins: 20 },
        drcurve::Expansion::Linear,
    )
    .unwrap();
    // plug the conditioning values via overrides
    let eval = model.evaluate(&data, 0, 7.0, &[(l1, 0.0), (l2, 0.0)]);
    assert!(
        (eval.value - 0.3989).abs() < 0.02,
        "density at the true mean: {} (expected ~0.3989)",
        eval.value
    );
}

/// Estimates stay finite (and merely flagged) where the grid leaves the
/// observed support entirely: sim3 at a=0 sits below the truncation floor
/// of the treatment.
#[test]
fn weighted_estimates_finite_under_extrapolation() {
    let data = dgp::simulate(SystemId::Sim3, 500, 19).unwrap();
    let grid = SystemId::Sim3.default_grid();
    let mut cfg =
        EstimatorConfig::weighted(WeightPlan::new(0.01, WeightVariant::Simple).unwrap(), 23);
    cfg.stack = LearnerStackSpec::of(&[LearnerKind::Ols], 5);
    cfg.target_times = Some(vec![4]);
    let run = gcomp::estimate_weighted(&data, &grid, &cfg).unwrap();
    for j in 0..grid.n_trajectories() {
        let v = run.curve.value(j, 4);
        assert!(v.is_finite(), "trajectory {j} produced {v}");
        assert!((0.0..=1.0).contains(&v), "binary outcome outside [0,1]: {v}");
    }
    assert!(run.audit.extrapolated, "a=0 lies outside the observed treatment support");
}

/// The fallback chain walks past the immediate denominator on real data:
/// with a mid-range c on sim1 some stage-2 weights resolve at deeper
/// chain levels or at the marginal.
#[test]
fn fallback_chain_reaches_deeper_levels() {
    let data = dgp::simulate(SystemId::Sim1, 2000, 29).unwrap();
    let grid = InterventionGrid::constant(&[2.0, 11.0], 2).unwrap();
    let mut cfg =
        EstimatorConfig::weighted(WeightPlan::new(0.35, WeightVariant::Fallback).unwrap(), 31);
    cfg.stack = LearnerStackSpec::of(&[LearnerKind::Ols], 5);
    cfg.target_times = Some(vec![2]);
    let run = gcomp::estimate_weighted(&data, &grid, &cfg).unwrap();
    let mut labels: Vec<String> = run.records.iter().map(|r| r.record.branch.label()).collect();
    labels.sort();
    labels.dedup();
    assert!(
        labels.iter().any(|l| l.starts_with("fallback_level") || l.starts_with("marginal_ratio")),
        "no deep-chain branches seen: {labels:?}"
    );
}

/// Survival-variant CDRC on sim2 tracks the counterfactual truth over the
/// central grid when averaged over replicates (the desk-scale analogue of
/// the n=10,000 panel).
#[test]
fn sim2_survival_cdrc_tracks_truth_centrally() {
    let grid =
        InterventionGrid::constant(&(-2..=8).map(|v| v as f64).collect::<Vec<_>>(), 4).unwrap();
    let truth = dgp::counterfactual_truth(SystemId::Sim2, &grid, 1_000_000, 3).unwrap();
    let r_reps = 40u64;
    let sums: Vec<Vec<f64>> = (0..r_reps)
        .into_par_iter()
        .map(|rep| {
            let data = dgp::simulate(SystemId::Sim2, 10_000, 40_000 + rep)
                .unwrap()
                .with_absorbing_outcomes();
            let mut cfg = EstimatorConfig::sequential(71 + rep);
            cfg.survival = true;
            cfg.stack = LearnerStackSpec::of(&[LearnerKind::FractionalLogistic], 5);
            cfg.target_times = Some(vec![4]);
            let est = gcomp::estimate(&data, &grid, &cfg).unwrap();
            (0..grid.n_trajectories()).map(|j| est.value(j, 4)).collect()
        })
        .collect();
    let max_bias = (0..grid.n_trajectories())
        .map(|j| {
            let mean: f64 = sums.iter().map(|s| s[j]).sum::<f64>() / r_reps as f64;
            (mean - truth.value(j, 4)).abs()
        })
        .fold(0.0_f64, f64::max);
    assert!(max_bias < 0.1, "max |mean bias| over the central grid: {max_bias:.4}");
}

/// Cells where too many replicates are undefined get the unreliable flag:
/// with c = 1 the sim1 marginal density can never clear the threshold, so
/// every replicate is undefined.
#[test]
fn bootstrap_flags_unreliable_cells() {
    let data = dgp::simulate(SystemId::Sim1, 300, 47).unwrap();
    let grid = InterventionGrid::constant(&[7.0], 2).unwrap();
    let mut cfg =
        EstimatorConfig::weighted(WeightPlan::new(1.0, WeightVariant::Simple).unwrap(), 5);
    cfg.stack = LearnerStackSpec::of(&[LearnerKind::Ols], 5);
    cfg.target_times = Some(vec![0]);
    let res = bootstrap(&data, &grid, &cfg, 50, 0.95, 13).unwrap();
    assert!(res.undefined_rate[0][0] > 0.2);
    assert!(res.unreliable[0][0]);
}

//! Desk-scale Monte-Carlo study: replicate datasets, run estimators,
//! report bias against brute-force counterfactual truth.

use drcurve::dgp::{run_experiment, ExperimentEstimator, ExperimentSpec, SystemId};
use drcurve::gcomp::{EstimatorConfig, LearnerStackSpec};
use drcurve::learners::LearnerKind;
use drcurve::weights::{WeightPlan, WeightVariant};

fn main() -> drcurve::Result<()> {
    let grid = SystemId::Sim1.default_grid();
    let mut seq = EstimatorConfig::sequential(0);
    seq.stack = LearnerStackSpec::of(&[LearnerKind::Ols], 5);
    seq.target_times = Some(vec![2]);
    let mut weighted =
        EstimatorConfig::weighted(WeightPlan::new(0.01, WeightVariant::Simple)?, 0);
    weighted.stack = seq.stack.clone();
    weighted.target_times = Some(vec![2]);

    let spec = ExperimentSpec {
        system: SystemId::Sim1,
        estimators: vec![
            ExperimentEstimator { name: "cdrc_sequential".into(), config: seq },
            ExperimentEstimator { name: "weighted_c0.01".into(), config: weighted },
        ],
        grid: grid.clone(),
        r: 25,
        n: 2000,
        seed: 2024,
        truth_draws: 300_000,
    };
    let report = run_experiment(&spec)?;

    println!("R = {}, n = {}, t = 2:", report.r, report.n);
    println!("{:>18} {:>4} {:>10} {:>10} {:>9} {:>8}", "estimator", "a", "mean", "truth", "bias", "sd");
    for cell in &report.cells {
        println!(
            "{:>18} {:>4} {:>10.4} {:>10.4} {:>9.4} {:>8.4}",
            cell.estimator, cell.trajectory_label, cell.mean_estimate, cell.truth, cell.bias,
            cell.empirical_sd
        );
    }
    Ok(())
}

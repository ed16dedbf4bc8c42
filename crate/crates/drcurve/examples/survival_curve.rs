//! Censoring/survival variant: densities and regressions restricted to
//! uncensored, event-free units; censoring intervened to zero; events
//! carried forward.

use drcurve::dgp::{self, SystemId};
use drcurve::gcomp::{estimate_weighted_survival, EstimatorConfig, LearnerStackSpec};
use drcurve::learners::LearnerKind;
use drcurve::InterventionGrid;

fn main() -> drcurve::Result<()> {
    let grid =
        InterventionGrid::constant(&(-2..=8).map(|v| v as f64).collect::<Vec<_>>(), 4)?;
    // events are absorbing for the survival path
    let data = dgp::simulate(SystemId::Sim2, 10_000, 13)?.with_absorbing_outcomes();
    let censored = (0..data.n_rows()).filter(|&r| data.row_has_missing(r)).count();
    println!("{censored} of {} units are censored at some visit", data.n_rows());

    let mut cfg = EstimatorConfig::sequential(5);
    cfg.survival = true;
    cfg.stack = LearnerStackSpec::of(
        &[LearnerKind::MeanOnly, LearnerKind::FractionalLogistic],
        5,
    );
    cfg.target_times = Some(vec![4]);
    let run = estimate_weighted_survival(&data, &grid, &cfg)?;

    let truth = dgp::counterfactual_truth(SystemId::Sim2, &grid, 200_000, 5)?;
    println!("cumulative event probability by the last visit, under no censoring:");
    println!("{:>6} {:>10} {:>10}", "a", "estimate", "truth");
    for j in 0..grid.n_trajectories() {
        println!("{:>6} {:>10.4} {:>10.4}", grid.label(j), run.curve.value(j, 4), truth.value(j, 4));
    }
    Ok(())
}

//! Sequential g-computation: iterated outcome regressions evaluated at
//! intervened treatment values, compared against brute-force
//! counterfactual truth.

use drcurve::dgp::{self, SystemId};
use drcurve::gcomp::{estimate_cdrc_sequential, EstimatorConfig, LearnerStackSpec};
use drcurve::learners::LearnerKind;

fn main() -> drcurve::Result<()> {
    let grid = SystemId::Sim1.default_grid();
    let data = dgp::simulate(SystemId::Sim1, 10_000, 11)?;

    let mut cfg = EstimatorConfig::sequential(1);
    cfg.stack =
        LearnerStackSpec::of(&[LearnerKind::Ols, LearnerKind::PolynomialOls { degree: 2 }], 5);
    let curve = estimate_cdrc_sequential(&data, &grid, &cfg)?;

    let truth = dgp::counterfactual_truth(SystemId::Sim1, &grid, 200_000, 5)?;
    println!("dose-response curve at the last time point (t = 2):");
    println!("{:>6} {:>10} {:>10} {:>8}", "a", "estimate", "truth", "error");
    for j in 0..grid.n_trajectories() {
        let (est, tr) = (curve.value(j, 2), truth.value(j, 2));
        println!("{:>6} {:>10.4} {:>10.4} {:>8.4}", grid.label(j), est, tr, est - tr);
    }
    Ok(())
}

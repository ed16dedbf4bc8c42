//! Positivity diagnostics: the proportion of weights different from one
//! (per c, intervention and time) and the binned conditional-support
//! estimator, both as plot-ready tables.

use drcurve::dgp::{self, SystemId};
use drcurve::diagnostics::{binned_support, shading_category, weight_proportion_surface};
use drcurve::gcomp::{compute_weight_records, EstimatorConfig};
use drcurve::weights::{WeightPlan, WeightVariant};

fn main() -> drcurve::Result<()> {
    let grid = SystemId::Sim3.default_grid();
    let data = dgp::simulate(SystemId::Sim3, 1000, 17)?;

    let cfg = EstimatorConfig::weighted(WeightPlan::new(0.01, WeightVariant::Simple)?, 1);
    let records = compute_weight_records(&data, &grid, &cfg, false)?;
    let c_grid = [0.001, 0.01, 0.025, 0.2, 1.0];
    let surface = weight_proportion_surface(&records, &c_grid, &grid)?;

    println!("proportion of weights != 1 at c = 0.01 (rows: intervention, cols: time):");
    let ci = 1;
    for j in 0..grid.n_trajectories() {
        let cells: Vec<String> =
            (0..surface.times.len()).map(|ti| format!("{:.2}", surface.cell(ci, j, ti))).collect();
        let avg = surface.visit_averaged.as_ref().unwrap()[ci][j];
        println!(
            "  a = {:>2}: [{}]  visit-averaged {:.2} ({})",
            grid.label(j),
            cells.join(" "),
            avg,
            shading_category(avg)
        );
    }

    let support = binned_support(&data, &grid)?;
    println!("\nbinned conditional support (probability of staying on the strategy):");
    for j in 0..grid.n_trajectories() {
        let cells: Vec<String> =
            (0..=data.t_max()).map(|t| format!("{:.2}", support.cell(0, j, t))).collect();
        println!("  a = {:>2}: [{}]", grid.label(j), cells.join(" "));
    }
    Ok(())
}

use drcurve::dgp::{self, ExperimentEstimator, ExperimentSpec, SystemId};
use drcurve::gcomp::{EstimatorConfig, LearnerStackSpec};
use drcurve::learners::LearnerKind;
use drcurve::stack::ScreenMethod;
use drcurve::InterventionGrid;

fn main() {
    let grid = InterventionGrid::constant(&(-2..=8).map(|v| v as f64).collect::<Vec<_>>(), 4).unwrap();
    for (name, screen, folds) in [
        ("screen+folds10", Some(ScreenMethod::LassoPath), 10usize),
        ("screen+assoc", Some(ScreenMethod::AssociationScreen { threshold: 0.1 }), 5),
    ] {
        let mut cfg = EstimatorConfig::sequential(0);
        cfg.survival = true;
        cfg.stack = LearnerStackSpec::of(&[LearnerKind::FractionalLogistic], folds);
        cfg.screening = screen;
        cfg.target_times = Some(vec![4]);
        let spec = ExperimentSpec {
            system: SystemId::Sim2,
            estimators: vec![ExperimentEstimator { name: "surv".into(), config: cfg }],
            grid: grid.clone(),
            r: 24,
            n: 10_000,
            seed: 515,
            truth_draws: 1_000_000,
        };
        let t0 = std::time::Instant::now();
        let rep = dgp::run_experiment(&spec).unwrap();
        let errs: Vec<String> = (0..grid.n_trajectories())
            .map(|j| format!("{:+.3}", rep.cell("surv", grid.label(j), 4).unwrap().bias))
            .collect();
        let fails = rep.cells.iter().map(|c| c.n_failed).max().unwrap();
        println!("{name}: [{}] fails {fails} ({:?})", errs.join(" "), t0.elapsed());
    }
}

//! Dose-response curve estimation for continuous interventions measured
//! at multiple time points.
//!
//! The crate estimates causal dose-response curves by g-computation
//! (sequential iterated regressions and parametric forward simulation)
//! and, where positivity is in doubt, a weighted estimand built from
//! conditional treatment densities with a truncation constant `c`. It
//! ships positivity diagnostics, nonparametric bootstrap bands, three
//! built-in simulation systems with brute-force counterfactual truth, and
//! a Monte-Carlo experiment runner.
//!
//! # Where to start
//!
//! The `examples/` directory holds one runnable program per capability:
//!
//! ```text
//! cargo run --release --example simulate_dataset        # draw a simulated cohort, save CSV + schema
//! cargo run --release --example sequential_curve        # sequential g-computation dose-response curve
//! cargo run --release --example parametric_curve        # parametric g-computation, cross-checked
//! cargo run --release --example weighted_curve          # positivity-weighted curves for several c
//! cargo run --release --example survival_curve          # censoring/survival variant
//! cargo run --release --example positivity_diagnostics  # weight proportions + binned support
//! cargo run --release --example bootstrap_bands         # percentile confidence bands
//! cargo run --release --example simulation_study        # bias report against counterfactual truth
//! cargo run --release --example super_learner           # the stacking ensemble on its own
//! ```
//!
//! A thin `drcurve` binary exposes the same capabilities as subcommands
//! (`simulate`, `estimate`, `diagnose`, `experiment`, `bootstrap`) for
//! scripted use; see the README.

pub mod cli;
pub mod data;
pub mod density;
pub mod design;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod gcomp;
pub mod inference;
pub mod learners;
mod linalg;
pub mod manifest;
pub mod stack;
mod util;
pub mod weights;

pub use data::{
    load_dataset, load_schema, ColumnRole, CurveEstimate, EstimandKind, InterventionGrid,
    LongitudinalDataset, Role, ValueKind,
};
pub use density::{fit_density, BinLayout, ConditionalDensityModel, DensityStrategy};
pub use design::Expansion;
pub use error::{Error, Result};
pub use gcomp::{
    estimate, estimate_cdrc_parametric, estimate_cdrc_sequential, estimate_weighted,
    estimate_weighted_survival, BinLayoutChoice, EstimatorConfig, LearnerStackSpec,
    ParametricSpec, WeightedRun,
};
pub use learners::{FittedLearner, LearnerKind};
pub use stack::{fit_stack, screen, ScreenMethod, StackLoss, StackedLearner};
pub use weights::{
    default_c, single_timepoint_weight, weight_fallback, weight_simple, WeightBranch, WeightPlan,
    WeightRecord, WeightVariant,
};

pub use linalg::Matrix;

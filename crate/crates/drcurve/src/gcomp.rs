//! The estimators: sequential g-computation via iterated outcome
//! regressions, parametric g-computation via Monte-Carlo forward
//! simulation, the weighted estimator built on iterated *weighted*
//! outcome regressions, and the censoring/survival variant.
//!
//! One engine drives the sequential and weighted paths: the sequential
//! estimator is the weighted algorithm with every weight identically one
//! (and no density fitting). Given identical seeds the two produce
//! bit-identical output whenever all weights are one.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    CurveEstimate, EstimandKind, EstimateMeta, InterventionGrid, LongitudinalDataset, Role,
    ValueKind,
};
use crate::density::{fit_density, BinLayout, ConditionalDensityModel, DensityStrategy};
use crate::design::{DesignInfo, Expansion};
use crate::error::{Error, Result};
use crate::learners::LearnerKind;
use crate::stack::{fit_stack, screen, ScreenMethod, StackLoss, StackedLearner};
use crate::util::{split_seed, split_seed_n};
use crate::weights::{
    single_timepoint_weight, weight_fallback, weight_simple, TrajectoryWeightRecord, WeightBranch,
    WeightPlan, WeightVariant,
};

const TAG_STACK: u64 = 0xa1;
const TAG_PARAMETRIC: u64 = 0xa2;
const TAG_BASELINE: u64 = 0xa3;

/// Learner set and cross-validation settings for the iterated outcome
/// regressions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerStackSpec {
    pub kinds: Vec<LearnerKind>,
    pub folds: usize,
    /// Fold-noise tolerance declared for the stack-risk invariant.
    pub tolerance: f64,
}

impl Default for LearnerStackSpec {
    fn default() -> Self {
        LearnerStackSpec {
            kinds: vec![
                LearnerKind::MeanOnly,
                LearnerKind::MedianOnly,
                LearnerKind::Ols,
                LearnerKind::PolynomialOls { degree: 2 },
                LearnerKind::Lasso,
                LearnerKind::Logistic,
                LearnerKind::stumps(),
            ],
            folds: 10,
            tolerance: 1e-9,
        }
    }
}

impl LearnerStackSpec {
    /// A single-member "stack"; useful when the truth is known to be in a
    /// simple model class and speed matters.
    pub fn single(kind: LearnerKind) -> Self {
        LearnerStackSpec { kinds: vec![kind], folds: 5, tolerance: 1e-9 }
    }

    pub fn of(kinds: &[LearnerKind], folds: usize) -> Self {
        LearnerStackSpec { kinds: kinds.to_vec(), folds, tolerance: 1e-9 }
    }

    fn describe(&self) -> String {
        self.kinds.iter().map(|k| k.label()).collect::<Vec<_>>().join("+")
    }
}

/// How bins are chosen for the binning density strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinLayoutChoice {
    /// Bins centered at the intervention-grid values at each time point.
    GridAligned,
    EqualFrequency { bins: usize },
}

/// Node family for the parametric g-formula conditionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFamily {
    Gaussian,
    Binomial,
    Categorical,
}

/// One declared conditional model for the parametric g-formula.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeModelSpec {
    pub column: String,
    pub family: NodeFamily,
    /// Predictor column names; defaults to the full temporal history.
    pub predictors: Vec<String>,
}

/// Conditional models for every covariate and outcome node, in temporal
/// order. Treatments are intervened on; censoring is forced to zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParametricSpec {
    pub nodes: Vec<NodeModelSpec>,
}

impl ParametricSpec {
    /// Model every time-varying covariate and outcome on its full history;
    /// family follows the declared value kind.
    pub fn default_for(data: &LongitudinalDataset) -> Self {
        let cols = data.columns();
        let mut nodes = Vec::new();
        for (j, col) in cols.iter().enumerate() {
            let modeled = matches!(col.role, Role::TimeCovariate | Role::Outcome);
            if !modeled {
                continue;
            }
            let family = match col.value_kind {
                ValueKind::Continuous => NodeFamily::Gaussian,
                ValueKind::Binary => NodeFamily::Binomial,
                ValueKind::Categorical => NodeFamily::Categorical,
            };
            let predictors = cols[..j].iter().map(|c| c.name.clone()).collect();
            nodes.push(NodeModelSpec { column: col.name.clone(), family, predictors });
        }
        ParametricSpec { nodes }
    }
}

/// Full estimator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub estimand: EstimandKind,
    /// Censoring/survival variant of the iterated algorithm.
    pub survival: bool,
    pub weights: Option<WeightPlan>,
    pub density: DensityStrategy,
    pub bin_layout: BinLayoutChoice,
    pub stack: LearnerStackSpec,
    pub screening: Option<ScreenMethod>,
    /// Basis expansion for the outcome regressions.
    pub expansion: Expansion,
    /// Basis expansion for the density conditioning sets.
    pub density_expansion: Expansion,
    pub seed: u64,
    /// Forward-simulation draws for the parametric estimator.
    pub monte_carlo_draws: usize,
    pub parametric: Option<ParametricSpec>,
    /// Target times to estimate; `None` means every time point.
    pub target_times: Option<Vec<usize>>,
}

impl EstimatorConfig {
    pub fn sequential(seed: u64) -> Self {
        EstimatorConfig {
            estimand: EstimandKind::CdrcSequential,
            survival: false,
            weights: None,
            density: DensityStrategy::GaussianRegression,
            bin_layout: BinLayoutChoice::EqualFrequency { bins: 20 },
            stack: LearnerStackSpec::default(),
            screening: None,
            expansion: Expansion::Linear,
            density_expansion: Expansion::Linear,
            seed,
            monte_carlo_draws: 10_000,
            parametric: None,
            target_times: None,
        }
    }

    pub fn weighted(plan: WeightPlan, seed: u64) -> Self {
        let mut cfg = Self::sequential(seed);
        cfg.estimand = EstimandKind::Weighted;
        cfg.weights = Some(plan);
        cfg
    }

    pub fn parametric(seed: u64) -> Self {
        let mut cfg = Self::sequential(seed);
        cfg.estimand = EstimandKind::CdrcParametric;
        cfg
    }

    fn validate(&self, data: &LongitudinalDataset, grid: &InterventionGrid) -> Result<()> {
        if grid.horizon() != data.t_max() + 1 {
            return Err(Error::Args(format!(
                "grid covers {} time points but the dataset has {}",
                grid.horizon(),
                data.t_max() + 1
            )));
        }
        if self.estimand == EstimandKind::Weighted && self.weights.is_none() {
            return Err(Error::Config("weighted estimand needs a weight plan".into()));
        }
        if let Some(times) = &self.target_times {
            if times.iter().any(|&t| t > data.t_max()) {
                return Err(Error::Args("target time beyond the dataset horizon".into()));
            }
            if times.is_empty() {
                return Err(Error::Args("target_times must not be empty".into()));
            }
        }
        if self.survival && self.estimand == EstimandKind::CdrcParametric {
            return Err(Error::Config(
                "the survival variant applies to the iterated estimators only".into(),
            ));
        }
        Ok(())
    }

    fn times(&self, data: &LongitudinalDataset) -> Vec<usize> {
        match &self.target_times {
            Some(t) => {
                let mut t = t.clone();
                t.sort_unstable();
                t.dedup();
                t
            }
            None => (0..=data.t_max()).collect(),
        }
    }
}

/// Per-(target, trajectory) audit counters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EstimationAudit {
    /// (target time, trajectory, outcome regressions performed).
    pub outcome_regressions: Vec<(usize, usize, usize)>,
    /// (target time, trajectory, weight stages used).
    pub weight_stages: Vec<(usize, usize, usize)>,
    /// Any density evaluation left the observed support (extrapolation).
    pub extrapolated: bool,
}

/// Output of the iterated (weighted) engine.
#[derive(Debug, Clone)]
pub struct WeightedRun {
    pub curve: CurveEstimate,
    pub records: Vec<TrajectoryWeightRecord>,
    pub audit: EstimationAudit,
}

/// Standard sequential g-computation: the weighted algorithm with all
/// weights identically one.
pub fn estimate_cdrc_sequential(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
    config: &EstimatorConfig,
) -> Result<CurveEstimate> {
    let mut cfg = config.clone();
    cfg.estimand = EstimandKind::CdrcSequential;
    cfg.weights = None;
    let run = run_iterated(data, grid, &cfg, false)?;
    Ok(run.curve)
}

/// The iterated weighted estimator (the full algorithm, including the
/// t = 0 weighted mean and the undefined rule).
pub fn estimate_weighted(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
    config: &EstimatorConfig,
) -> Result<WeightedRun> {
    if config.weights.is_none() {
        return Err(Error::Config("weighted estimand needs a weight plan".into()));
    }
    let mut cfg = config.clone();
    cfg.estimand = EstimandKind::Weighted;
    run_iterated(data, grid, &cfg, false)
}

/// Survival variant: densities and regressions restricted to uncensored,
/// event-free units; censoring intervened to zero; events carried forward
/// through the recursion.
pub fn estimate_weighted_survival(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
    config: &EstimatorConfig,
) -> Result<WeightedRun> {
    run_iterated(data, grid, config, true)
}

/// Dispatch on the configured estimand (used by the CLI and bootstrap).
pub fn estimate(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
    config: &EstimatorConfig,
) -> Result<CurveEstimate> {
    match (config.estimand, config.survival) {
        (EstimandKind::CdrcParametric, _) => estimate_cdrc_parametric(data, grid, config),
        (EstimandKind::CdrcSequential, false) => estimate_cdrc_sequential(data, grid, config),
        (EstimandKind::Weighted, false) => Ok(estimate_weighted(data, grid, config)?.curve),
        (_, true) => Ok(run_iterated(data, grid, config, true)?.curve),
    }
}

/// Fit the treatment densities and evaluate the weights only — no outcome
/// regressions. This is what the positivity diagnostics consume.
pub fn compute_weight_records(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
    config: &EstimatorConfig,
    survival: bool,
) -> Result<Vec<TrajectoryWeightRecord>> {
    let plan = config
        .weights
        .ok_or_else(|| Error::Config("weight records need a weight plan".into()))?;
    let mut cfg = config.clone();
    cfg.estimand = EstimandKind::Weighted;
    cfg.validate(data, grid)?;
    let times = cfg.times(data);
    let max_t = *times.iter().max().unwrap();
    let ctx = build_stage_context(data, &cfg, survival, max_t)?;
    let mut bank = DensityBank::new(data, &cfg, grid, max_t);
    let mut records = Vec::new();
    for j in 0..grid.n_trajectories() {
        let overrides = trajectory_overrides(data, grid.trajectory(j), survival);
        for s in 0..=max_t {
            let sw = stage_weights(&mut bank, &ctx, &plan, s, j, grid.label(j), &overrides)?;
            records.extend(sw.records);
        }
    }
    Ok(records)
}

struct StageContext {
    /// Rows entering the stage-s regression and density fits.
    fit_rows: Vec<Vec<usize>>,
    /// Rows receiving a stage-s prediction.
    predict_rows: Vec<Vec<usize>>,
    /// event_by[r][t]: observed event on or before t (survival only).
    event_by: Vec<Vec<bool>>,
    /// Base (unscreened) design per stage.
    designs: Vec<DesignInfo>,
    /// Fit matrices per stage, aligned with `fit_rows` and `designs`.
    fit_matrices: Vec<crate::linalg::Matrix>,
}

fn build_stage_context(
    data: &LongitudinalDataset,
    cfg: &EstimatorConfig,
    survival: bool,
    max_t: usize,
) -> Result<StageContext> {
    let n = data.n_rows();
    let t_max = data.t_max();

    let mut event_by = vec![vec![false; t_max + 1]; n];
    if survival {
        for r in 0..n {
            let mut seen = false;
            for t in 0..=t_max {
                let y = data.value(r, data.outcome_col(t));
                if !y.is_nan() {
                    if seen && y != 1.0 {
                        return Err(Error::Estimation {
                            stage: format!("input validation (unit {r}, time {t})"),
                            message: "outcome must be monotone once 1 (event indicator)".into(),
                        });
                    }
                    if y == 1.0 {
                        seen = true;
                    }
                }
                event_by[r][t] = seen;
            }
        }
    }

    // uncensored_through[r][t]: C_s observed and zero for every s <= t
    let mut unc = vec![vec![true; t_max + 1]; n];
    for t in 0..=t_max {
        if let Some(cc) = data.censoring_col(t) {
            for (r, unc_r) in unc.iter_mut().enumerate() {
                let v = data.value(r, cc);
                let ok = v == 0.0;
                unc_r[t] = ok && (t == 0 || unc_r[t - 1]);
            }
        } else {
            for unc_r in unc.iter_mut() {
                if t > 0 {
                    unc_r[t] = unc_r[t - 1];
                }
            }
        }
    }

    let mut fit_rows = Vec::with_capacity(max_t + 1);
    let mut predict_rows = Vec::with_capacity(max_t + 1);
    for s in 0..=max_t {
        if survival {
            let fit: Vec<usize> = (0..n)
                .filter(|&r| unc[r][s] && (s == 0 || !event_by[r][s - 1]))
                .collect();
            let pred: Vec<usize> =
                (0..n).filter(|&r| s == 0 || unc[r][s - 1]).collect();
            fit_rows.push(fit);
            predict_rows.push(pred);
        } else {
            if (0..n).any(|r| data.row_has_missing(r)) {
                return Err(Error::Config(
                    "dataset has missing values; use the survival variant".into(),
                ));
            }
            fit_rows.push((0..n).collect());
            predict_rows.push((0..n).collect());
        }
    }

    let mut designs = Vec::with_capacity(max_t + 1);
    let mut fit_matrices = Vec::with_capacity(max_t + 1);
    for s in 0..=max_t {
        let a_col = data.treatment_col(s);
        let base: Vec<usize> = (0..=a_col).collect();
        if fit_rows[s].is_empty() {
            // degenerate stage: keep a placeholder design over all rows
            let info = DesignInfo::fit(data, &predict_rows[s], &base, cfg.expansion, Some(a_col))?;
            let m = info.matrix(data, &[], &[]);
            designs.push(info);
            fit_matrices.push(m);
            continue;
        }
        let info = DesignInfo::fit(data, &fit_rows[s], &base, cfg.expansion, Some(a_col))?;
        let m = info.matrix(data, &fit_rows[s], &[]);
        designs.push(info);
        fit_matrices.push(m);
    }

    Ok(StageContext { fit_rows, predict_rows, event_by, designs, fit_matrices })
}

/// Overrides plugging trajectory `traj` into every treatment column (and
/// zeroing censoring columns in survival mode).
fn trajectory_overrides(
    data: &LongitudinalDataset,
    traj: &[f64],
    survival: bool,
) -> Vec<(usize, f64)> {
    let mut ov: Vec<(usize, f64)> = (0..=data.t_max())
        .map(|t| (data.treatment_col(t), traj[t]))
        .collect();
    if survival {
        for t in 0..=data.t_max() {
            if let Some(cc) = data.censoring_col(t) {
                ov.push((cc, 0.0));
            }
        }
    }
    ov
}

struct StageWeights {
    /// Aligned with predict_rows[s] (the units whose stage predictions the
    /// weight multiplies).
    weights: Vec<f64>,
    /// Audit records for the fit population.
    records: Vec<TrajectoryWeightRecord>,
    /// t = 0 rule: marginal density at a_0 fell at or below c.
    undefined: bool,
    extrapolated: bool,
}

struct DensityBank<'a> {
    data: &'a LongitudinalDataset,
    cfg: &'a EstimatorConfig,
    grid: &'a InterventionGrid,
    /// numerator[s]: g(A_s | H_s)
    numerator: Vec<Option<ConditionalDensityModel>>,
    /// chain[s][k]: g(A_s | A_{s-1-k}, H_{s-1-k}); fit lazily
    chain: Vec<Vec<Option<ConditionalDensityModel>>>,
    /// marginal[s]: g(A_s)
    marginal: Vec<Option<ConditionalDensityModel>>,
}

impl<'a> DensityBank<'a> {
    fn new(
        data: &'a LongitudinalDataset,
        cfg: &'a EstimatorConfig,
        grid: &'a InterventionGrid,
        max_t: usize,
    ) -> Self {
        DensityBank {
            data,
            cfg,
            grid,
            numerator: (0..=max_t).map(|_| None).collect(),
            chain: (0..=max_t).map(|s| (0..s.max(1)).map(|_| None).collect()).collect(),
            marginal: (0..=max_t).map(|_| None).collect(),
        }
    }

    fn layout_for(&self, s: usize) -> BinLayout {
        match self.cfg.bin_layout {
            BinLayoutChoice::EqualFrequency { bins } => BinLayout::EqualFrequency { bins },
            BinLayoutChoice::GridAligned => {
                let mut centers: Vec<f64> =
                    (0..self.grid.n_trajectories()).map(|j| self.grid.trajectory(j)[s]).collect();
                centers.sort_by(|a, b| a.total_cmp(b));
                centers.dedup();
                BinLayout::Aligned { centers }
            }
        }
    }

    fn fit(
        &self,
        s: usize,
        conditioning: &[usize],
        rows: &[usize],
    ) -> Result<ConditionalDensityModel> {
        fit_density(
            self.data,
            rows,
            self.data.treatment_col(s),
            conditioning,
            self.cfg.density,
            &self.layout_for(s),
            self.cfg.density_expansion,
        )
        .map_err(|e| Error::estimation(format!("density fit at time {s}"), e.to_string()))
    }

    fn numerator(&mut self, s: usize, rows: &[usize]) -> Result<&ConditionalDensityModel> {
        if self.numerator[s].is_none() {
            let cond = self.data.history_cols(s);
            self.numerator[s] = Some(self.fit(s, &cond, rows)?);
        }
        Ok(self.numerator[s].as_ref().unwrap())
    }

    /// k-th chain element for stage s: conditioning on history up to and
    /// including A_{s-1-k}.
    fn chain(&mut self, s: usize, k: usize, rows: &[usize]) -> Result<&ConditionalDensityModel> {
        if self.chain[s][k].is_none() {
            let upto = s - 1 - k;
            let cond = self.data.history_through_treatment(upto);
            self.chain[s][k] = Some(self.fit(s, &cond, rows)?);
        }
        Ok(self.chain[s][k].as_ref().unwrap())
    }

    fn marginal(&mut self, s: usize, rows: &[usize]) -> Result<&ConditionalDensityModel> {
        if self.marginal[s].is_none() {
            self.marginal[s] = Some(self.fit(s, &[], rows)?);
        }
        Ok(self.marginal[s].as_ref().unwrap())
    }
}

/// Compute the stage-s weights for trajectory `j` (shared by every target
/// time >= s). Densities are fit on the stage's fit rows; weights are
/// evaluated for every prediction row, with audit records kept for the
/// fit population.
fn stage_weights(
    bank: &mut DensityBank,
    ctx: &StageContext,
    plan: &WeightPlan,
    s: usize,
    j: usize,
    label: &str,
    overrides: &[(usize, f64)],
) -> Result<StageWeights> {
    let data = bank.data;
    let fit_rows = &ctx.fit_rows[s];
    let rows = &ctx.predict_rows[s];
    let in_fit: Vec<bool> = {
        let mut mask = vec![false; data.n_rows()];
        for &r in fit_rows {
            mask[r] = true;
        }
        rows.iter().map(|&r| mask[r]).collect()
    };
    let a = bank.grid.trajectory(j)[s];
    let mut extrapolated = false;

    let num_evals = {
        let m = bank.numerator(s, fit_rows)?;
        m.evaluate_rows(data, rows, a, overrides)
    };

    let mut weights = Vec::with_capacity(rows.len());
    let mut records = Vec::with_capacity(rows.len());
    let mut undefined = false;
    let mut push = |i: usize, rec: crate::weights::WeightRecord| {
        weights.push(rec.weight);
        if in_fit[i] {
            records.push(TrajectoryWeightRecord {
                trajectory: j,
                trajectory_label: label.to_string(),
                c: plan.c,
                record: rec,
            });
        }
    };

    if s == 0 {
        let marg = {
            let m = bank.marginal(0, fit_rows)?;
            // the marginal conditions on nothing; row 0 stands in for all
            m.evaluate(data, rows.first().copied().unwrap_or(0), a, &[])
        };
        extrapolated |= marg.extrapolated;
        for (i, &r) in rows.iter().enumerate() {
            let ne = num_evals[i];
            extrapolated |= ne.extrapolated;
            let rec = single_timepoint_weight(ne.value, marg.value, plan).at(r, 0);
            undefined |= rec.branch == WeightBranch::Undefined;
            push(i, rec);
        }
        return Ok(StageWeights { weights, records, undefined, extrapolated });
    }

    // immediate denominator g(A_s | A_{s-1}, H_{s-1})
    let den0: Vec<crate::density::DensityEval> = {
        let m = bank.chain(s, 0, fit_rows)?;
        m.evaluate_rows(data, rows, a, overrides)
    };

    match plan.variant {
        WeightVariant::Simple => {
            for (i, &r) in rows.iter().enumerate() {
                let ne = num_evals[i];
                let de = den0[i];
                extrapolated |= ne.extrapolated || de.extrapolated;
                let rec = weight_simple(ne.value, de.value, plan).at(r, s);
                push(i, rec);
            }
        }
        WeightVariant::Fallback => {
            // progressive chains: deeper conditionals are only fit when a
            // unit's chain has not yet cleared c
            let mut chains: Vec<Vec<f64>> = den0.iter().map(|e| vec![e.value]).collect();
            for e in &den0 {
                extrapolated |= e.extrapolated;
            }
            let resolved = |num: f64, chain: &[f64]| -> bool {
                num > plan.c || chain.iter().any(|&d| d > plan.c)
            };
            for k in 1..s {
                let unresolved: Vec<usize> = (0..rows.len())
                    .filter(|&i| !resolved(num_evals[i].value, &chains[i]))
                    .collect();
                if unresolved.is_empty() {
                    break;
                }
                let evals = {
                    let m = bank.chain(s, k, fit_rows)?;
                    unresolved
                        .iter()
                        .map(|&i| m.evaluate(data, rows[i], a, overrides))
                        .collect::<Vec<_>>()
                };
                for (ui, &i) in unresolved.iter().enumerate() {
                    extrapolated |= evals[ui].extrapolated;
                    chains[i].push(evals[ui].value);
                }
            }
            let marg = {
                let m = bank.marginal(s, fit_rows)?;
                m.evaluate(data, rows.first().copied().unwrap_or(0), a, &[])
            };
            extrapolated |= marg.extrapolated;
            for (i, &r) in rows.iter().enumerate() {
                let mut chain = chains[i].clone();
                chain.push(marg.value);
                let rec = weight_fallback(num_evals[i].value, &chain, plan).at(r, s);
                push(i, rec);
            }
        }
    }

    Ok(StageWeights { weights, records, undefined, extrapolated })
}

fn run_iterated(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
    cfg: &EstimatorConfig,
    survival: bool,
) -> Result<WeightedRun> {
    cfg.validate(data, grid)?;
    if !survival && data.has_censoring() {
        return Err(Error::Config(
            "dataset declares censoring columns; use the survival variant".into(),
        ));
    }
    let weighted = cfg.weights.is_some();
    let plan = cfg.weights;
    let times = cfg.times(data);
    let max_t = *times.iter().max().unwrap();
    let n = data.n_rows();
    let n_a = grid.n_trajectories();

    let ctx = build_stage_context(data, cfg, survival, max_t)?;
    let mut bank = DensityBank::new(data, cfg, grid, max_t);

    let binary_outcome =
        (0..=data.t_max()).all(|t| data.columns()[data.outcome_col(t)].value_kind == ValueKind::Binary);

    // stage weights per (trajectory, stage); shared across target times
    let mut all_records: Vec<TrajectoryWeightRecord> = Vec::new();
    let mut stage_w: Vec<Vec<Option<StageWeights>>> = (0..n_a)
        .map(|_| (0..=max_t).map(|_| None).collect())
        .collect();
    if weighted {
        let plan = plan.as_ref().unwrap();
        for j in 0..n_a {
            let overrides = trajectory_overrides(data, grid.trajectory(j), survival);
            for s in 0..=max_t {
                let sw = stage_weights(&mut bank, &ctx, plan, s, j, grid.label(j), &overrides)?;
                all_records.extend(sw.records.iter().cloned());
                stage_w[j][s] = Some(sw);
            }
        }
    }

    let mut values = vec![vec![f64::NAN; times.len()]; n_a];
    let mut undefined = vec![vec![false; times.len()]; n_a];
    let mut audit = EstimationAudit::default();
    audit.extrapolated = stage_w
        .iter()
        .flatten()
        .flatten()
        .any(|sw| sw.extrapolated);

    for j in 0..n_a {
        let overrides = trajectory_overrides(data, grid.trajectory(j), survival);
        for (ti, &t) in times.iter().enumerate() {
            let mut regressions = 0usize;
            let mut weight_stages = 0usize;

            // Step 0b: the iterated outcome starts at the observed Y_t
            let y_col = data.outcome_col(t);
            let mut ytilde: Vec<f64> = (0..n).map(|r| data.value(r, y_col)).collect();

            for s in (1..=t).rev() {
                let rows_fit = &ctx.fit_rows[s];
                if rows_fit.is_empty() {
                    let pred_rows = &ctx.predict_rows[s];
                    let all_absorbed =
                        pred_rows.iter().all(|&r| ctx.event_by[r][s - 1]);
                    if survival && all_absorbed {
                        for &r in pred_rows {
                            ytilde[r] = 1.0;
                        }
                        continue;
                    }
                    return Err(Error::estimation(
                        format!("stage {s} (target {t})"),
                        "no uncensored event-free units to fit on",
                    ));
                }
                let response: Vec<f64> = rows_fit.iter().map(|&r| ytilde[r]).collect();
                if response.iter().any(|v| !v.is_finite()) {
                    return Err(Error::estimation(
                        format!("stage {s} (target {t})"),
                        "iterated outcome not finite",
                    ));
                }

                // Step 4: the weight factor is a function of the history, so
                // E(w Ytilde | A_s, H_s) = w(H_s) E(Ytilde | A_s, H_s); the
                // stack fits the conditional-expectation part and the
                // density-derived weight multiplies the prediction.
                let stack = fit_stage(
                    cfg,
                    &ctx.designs[s],
                    &ctx.fit_matrices[s],
                    &response,
                    split_seed_n(cfg.seed, &[TAG_STACK, t as u64, j as u64, s as u64]),
                )
                .map_err(|e| Error::estimation(format!("stage {s} (target {t})"), e.to_string()))?;
                regressions += 1;

                // Step 5: predict under the intervention, weighted
                let pred_rows = &ctx.predict_rows[s];
                let xp = stack.design.matrix(data, pred_rows, &overrides);
                let preds = stack.stack.predict(&xp);
                if weighted {
                    let sw = stage_w[j][s].as_ref().unwrap();
                    weight_stages += 1;
                    for ((&r, p), &w) in pred_rows.iter().zip(preds).zip(&sw.weights) {
                        ytilde[r] = w * p;
                    }
                } else {
                    for (&r, p) in pred_rows.iter().zip(preds) {
                        ytilde[r] = p;
                    }
                }
                if survival {
                    for &r in pred_rows {
                        if ctx.event_by[r][s - 1] {
                            ytilde[r] = 1.0;
                        }
                    }
                }
            }

            // t = 0 stage: unweighted regression, weighted mean
            let rows_fit = &ctx.fit_rows[0];
            if rows_fit.is_empty() {
                return Err(Error::estimation(
                    format!("stage 0 (target {t})"),
                    "no units to fit on",
                ));
            }
            let response: Vec<f64> = rows_fit.iter().map(|&r| ytilde[r]).collect();
            let stack = fit_stage(
                cfg,
                &ctx.designs[0],
                &ctx.fit_matrices[0],
                &response,
                split_seed_n(cfg.seed, &[TAG_STACK, t as u64, j as u64, 0]),
            )
            .map_err(|e| Error::estimation(format!("stage 0 (target {t})"), e.to_string()))?;
            regressions += 1;

            let all_rows: Vec<usize> = (0..n).collect();
            let xp = stack.design.matrix(data, &all_rows, &overrides);
            let preds = stack.stack.predict(&xp);

            let (estimate, cell_undefined) = if weighted {
                let sw = stage_w[j][0].as_ref().unwrap();
                weight_stages += 1;
                // weights are aligned with predict_rows[0] (= all rows)
                let mut num = 0.0;
                let mut den = 0.0;
                for (i, &r) in ctx.predict_rows[0].iter().enumerate() {
                    num += sw.weights[i] * preds[r];
                    den += sw.weights[i];
                }
                let est = if den > 0.0 { num / den } else { f64::NAN };
                (est, sw.undefined)
            } else {
                let mut num = 0.0;
                let mut den = 0.0;
                for &p in &preds {
                    num += 1.0 * p;
                    den += 1.0;
                }
                (num / den, false)
            };

            let estimate = if binary_outcome && estimate.is_finite() {
                estimate.clamp(0.0, 1.0)
            } else {
                estimate
            };
            values[j][ti] = estimate;
            undefined[j][ti] = cell_undefined;
            audit.outcome_regressions.push((t, j, regressions));
            if weighted {
                audit.weight_stages.push((t, j, weight_stages));
            }
        }
    }

    let curve = CurveEstimate {
        estimand: cfg.estimand,
        c: plan.map(|p| p.c),
        labels: (0..n_a).map(|j| grid.label(j).to_string()).collect(),
        values,
        undefined,
        meta: EstimateMeta {
            n,
            seed: cfg.seed,
            learners: cfg.stack.describe(),
        },
    };
    // times are recorded in the CSV rows; expose them via the audit struct
    let mut curve = curve;
    curve_apply_times(&mut curve, &times);
    Ok(WeightedRun { curve, records: all_records, audit })
}

/// Re-key curve cells by actual target time when a subset was estimated.
fn curve_apply_times(curve: &mut CurveEstimate, times: &[usize]) {
    if times.len() == curve.values[0].len() && times.iter().enumerate().all(|(i, &t)| i == t) {
        return;
    }
    let t_max = *times.iter().max().unwrap();
    for j in 0..curve.values.len() {
        let mut v = vec![f64::NAN; t_max + 1];
        let mut u = vec![false; t_max + 1];
        for (i, &t) in times.iter().enumerate() {
            v[t] = curve.values[j][i];
            u[t] = curve.undefined[j][i];
        }
        curve.values[j] = v;
        curve.undefined[j] = u;
    }
}

struct FittedStage {
    design: DesignInfo,
    stack: StackedLearner,
}

fn fit_stage(
    cfg: &EstimatorConfig,
    base_design: &DesignInfo,
    x_full: &crate::linalg::Matrix,
    response: &[f64],
    seed: u64,
) -> Result<FittedStage> {
    // a constant response is its own conditional expectation (common in
    // survival stages with no new events)
    let constant = response.windows(2).all(|w| w[0] == w[1]);
    let binary = response.iter().all(|&v| v == 0.0 || v == 1.0);
    let in_unit = response.iter().all(|&v| (0.0..=1.0).contains(&v));
    let kinds: Vec<LearnerKind> = if constant {
        vec![LearnerKind::MeanOnly]
    } else {
        cfg.stack
            .kinds
            .iter()
            .copied()
            .filter(|k| match k {
                LearnerKind::Logistic => binary,
                LearnerKind::FractionalLogistic => in_unit,
                _ => true,
            })
            .collect()
    };
    if kinds.is_empty() {
        return Err(Error::Fit("no applicable stack members for this response".into()));
    }

    let (design, x) = match cfg.screening {
        Some(method) => {
            let kept = screen(
                x_full,
                response,
                method,
                base_design.treatment_term,
                &base_design.binary_term,
                split_seed(seed, 0x5c2),
            );
            (base_design.keep(&kept), x_full.select_cols(&kept))
        }
        None => (base_design.clone(), x_full.clone()),
    };

    // iterated weighted outcomes are regressed under squared loss
    let stack = fit_stack(&kinds, &x, response, cfg.stack.folds, StackLoss::Squared, seed, cfg.stack.tolerance)?;
    Ok(FittedStage { design, stack })
}

enum FittedNode {
    Gaussian { design: DesignInfo, model: crate::learners::FittedLearner, sigma: f64 },
    Binomial { design: DesignInfo, model: crate::learners::FittedLearner },
    Categorical { design: DesignInfo, models: Vec<(f64, NodeCatModel)> },
}

enum NodeCatModel {
    Logistic(crate::learners::FittedLearner),
    Constant(f64),
}

/// Parametric g-computation: fit every declared conditional, then
/// Monte-Carlo forward-simulate under each intervention trajectory.
pub fn estimate_cdrc_parametric(
    data: &LongitudinalDataset,
    grid: &InterventionGrid,
    config: &EstimatorConfig,
) -> Result<CurveEstimate> {
    config.validate(data, grid)?;
    let spec = config
        .parametric
        .as_ref()
        .ok_or_else(|| Error::Config("parametric estimator needs declared conditional models".into()))?;
    let times = config.times(data);
    let t_max = data.t_max();
    let n = data.n_rows();

    // every covariate/outcome node must have a declared conditional
    for (j, col) in data.columns().iter().enumerate() {
        let _ = j;
        if matches!(col.role, Role::TimeCovariate | Role::Outcome)
            && !spec.nodes.iter().any(|nm| nm.column == col.name)
        {
            return Err(Error::Config(format!(
                "no conditional model declared for node '{}'",
                col.name
            )));
        }
    }

    // fit conditionals in temporal order
    let mut fitted: Vec<(usize, FittedNode)> = Vec::new();
    for node in &spec.nodes {
        let col = data
            .column_index(&node.column)
            .ok_or_else(|| Error::Config(format!("unknown node column '{}'", node.column)))?;
        let pred_cols: Vec<usize> = node
            .predictors
            .iter()
            .map(|p| {
                data.column_index(p)
                    .ok_or_else(|| Error::Config(format!("unknown predictor '{p}'")))
            })
            .collect::<Result<_>>()?;
        if pred_cols.iter().any(|&p| p >= col) {
            return Err(Error::Config(format!(
                "predictors of '{}' must temporally precede it",
                node.column
            )));
        }
        let rows: Vec<usize> = (0..n)
            .filter(|&r| {
                !data.value(r, col).is_nan()
                    && pred_cols.iter().all(|&p| !data.value(r, p).is_nan())
            })
            .collect();
        if rows.len() < pred_cols.len() + 2 {
            return Err(Error::Fit(format!(
                "too few complete rows to fit node '{}'",
                node.column
            )));
        }
        let design = DesignInfo::fit(data, &rows, &pred_cols, config.expansion, None)?;
        let x = design.matrix(data, &rows, &[]);
        let y: Vec<f64> = rows.iter().map(|&r| data.value(r, col)).collect();
        let f = match node.family {
            NodeFamily::Gaussian => {
                let model = crate::learners::fit_ols(&x, &y)?;
                let sigma = model.residual_scale;
                FittedNode::Gaussian { design, model, sigma }
            }
            NodeFamily::Binomial => {
                let model = crate::learners::fit_logistic(&x, &y).or_else(|_| {
                    // single-class responses collapse to a constant
                    let p = crate::linalg::mean(&y);
                    Ok::<_, Error>(crate::learners::fit_mean(&vec![p; y.len()]))
                })?;
                FittedNode::Binomial { design, model }
            }
            NodeFamily::Categorical => {
                let levels = data.levels(col).unwrap_or(&[]).to_vec();
                let mut models = Vec::new();
                for &lvl in &levels {
                    let ymem: Vec<f64> =
                        y.iter().map(|&v| if v == lvl { 1.0 } else { 0.0 }).collect();
                    let ones = ymem.iter().filter(|&&v| v == 1.0).count();
                    let m = if ones == 0 || ones == ymem.len() {
                        NodeCatModel::Constant(ones as f64 / ymem.len() as f64)
                    } else {
                        NodeCatModel::Logistic(crate::learners::fit_logistic(&x, &ymem)?)
                    };
                    models.push((lvl, m));
                }
                FittedNode::Categorical { design, models }
            }
        };
        fitted.push((col, f));
    }
    fitted.sort_by_key(|(col, _)| *col);

    let draws = config.monte_carlo_draws.max(1);
    let n_a = grid.n_trajectories();
    let m_cols = data.n_cols();
    let outcome_cols: Vec<usize> = (0..=t_max).map(|t| data.outcome_col(t)).collect();
    let treatment_cols = data.treatment_cols();
    let censoring_cols: Vec<Option<usize>> = (0..=t_max).map(|t| data.censoring_col(t)).collect();
    let baseline_cols: Vec<usize> = data
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.role == Role::BaselineCovariate)
        .map(|(i, _)| i)
        .collect();

    // common baseline draws across trajectories
    let mut base_rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, TAG_BASELINE));
    let baseline_idx: Vec<usize> = (0..draws).map(|_| base_rng.random_range(0..n)).collect();

    let mut values = vec![vec![f64::NAN; times.len()]; n_a];
    let binary_outcome =
        (0..=t_max).all(|t| data.columns()[data.outcome_col(t)].value_kind == ValueKind::Binary);

    for j in 0..n_a {
        let traj = grid.trajectory(j);
        let mut rng =
            ChaCha8Rng::seed_from_u64(split_seed_n(config.seed, &[TAG_PARAMETRIC, j as u64]));
        let mut mean_y = vec![0.0_f64; t_max + 1];
        let mut record = vec![0.0_f64; m_cols];
        for &bi in &baseline_idx {
            for &bc in &baseline_cols {
                record[bc] = data.value(bi, bc);
            }
            for t in 0..=t_max {
                record[treatment_cols[t]] = traj[t];
                if let Some(cc) = censoring_cols[t] {
                    record[cc] = 0.0;
                }
            }
            // walk the modeled nodes in temporal order
            for (col, node) in &fitted {
                let value = match node {
                    FittedNode::Gaussian { design, model, sigma } => {
                        let row = design.row_from_values(&record);
                        let mu = model.predict_row(&row);
                        if outcome_cols.contains(col) {
                            let t = data.columns()[*col].time_index.unwrap();
                            mean_y[t] += mu;
                        }
                        mu + sigma * standard_normal(&mut rng)
                    }
                    FittedNode::Binomial { design, model } => {
                        let row = design.row_from_values(&record);
                        let p = model.predict_row(&row).clamp(0.0, 1.0);
                        if outcome_cols.contains(col) {
                            let t = data.columns()[*col].time_index.unwrap();
                            mean_y[t] += p;
                        }
                        if rng.random::<f64>() < p {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    FittedNode::Categorical { design, models } => {
                        let row = design.row_from_values(&record);
                        let mut probs: Vec<f64> = models
                            .iter()
                            .map(|(_, m)| match m {
                                NodeCatModel::Logistic(f) => f.predict_row(&row).max(0.0),
                                NodeCatModel::Constant(p) => *p,
                            })
                            .collect();
                        let total: f64 = probs.iter().sum();
                        if total > 0.0 {
                            for p in probs.iter_mut() {
                                *p /= total;
                            }
                        }
                        let u: f64 = rng.random();
                        let mut cum = 0.0;
                        let mut drawn = models.last().map(|(l, _)| *l).unwrap_or(0.0);
                        for ((lvl, _), p) in models.iter().zip(&probs) {
                            cum += p;
                            if u < cum {
                                drawn = *lvl;
                                break;
                            }
                        }
                        drawn
                    }
                };
                record[*col] = value;
            }
        }
        for (ti, &t) in times.iter().enumerate() {
            let est = mean_y[t] / draws as f64;
            values[j][ti] = if binary_outcome { est.clamp(0.0, 1.0) } else { est };
        }
    }

    let mut curve = CurveEstimate {
        estimand: EstimandKind::CdrcParametric,
        c: None,
        labels: (0..n_a).map(|j| grid.label(j).to_string()).collect(),
        values,
        undefined: vec![vec![false; times.len()]; n_a],
        meta: EstimateMeta {
            n,
            seed: config.seed,
            learners: format!("parametric({} draws)", draws),
        },
    };
    curve_apply_times(&mut curve, &times);
    Ok(curve)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ColumnRole;
    use rand::Rng;

    /// One-period dataset: L ~ U(0,2), A = L + noise, Y = 1 + 2A + L + noise.
    fn one_period(n: usize, seed: u64) -> LongitudinalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = vec![
            ColumnRole::baseline("l", ValueKind::Continuous),
            ColumnRole::treatment("a0", 0),
            ColumnRole::outcome("y0", 0, ValueKind::Continuous),
        ];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let l = rng.random::<f64>() * 2.0;
                let a = l + rng.random::<f64>();
                let y = 1.0 + 2.0 * a + l + 0.1 * (rng.random::<f64>() - 0.5);
                vec![l, a, y]
            })
            .collect();
        LongitudinalDataset::from_rows(&schema, &rows).unwrap()
    }

    #[test]
    fn one_stage_reduces_to_outcome_regression() {
        // T=0, no covariates, A independent of everything: the sequential
        // estimate at a equals the sample regression E(Y | A = a)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let schema =
            vec![ColumnRole::treatment("a0", 0), ColumnRole::outcome("y0", 0, ValueKind::Continuous)];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let a = rng.random::<f64>() * 4.0;
                let y = 0.5 + 1.5 * a + 0.2 * (rng.random::<f64>() - 0.5);
                vec![a, y]
            })
            .collect();
        let data = LongitudinalDataset::from_rows(&schema, &rows).unwrap();
        let grid = InterventionGrid::constant(&[1.0, 2.0, 3.0], 0).unwrap();
        let mut cfg = EstimatorConfig::sequential(9);
        cfg.stack = LearnerStackSpec::single(LearnerKind::Ols);
        let est = estimate_cdrc_sequential(&data, &grid, &cfg).unwrap();
        for (ji, &a) in [1.0, 2.0, 3.0].iter().enumerate() {
            let expect = 0.5 + 1.5 * a;
            assert!(
                (est.value(ji, 0) - expect).abs() < 0.02,
                "a={a}: {} vs {}",
                est.value(ji, 0),
                expect
            );
        }
    }

    #[test]
    fn point_mass_treatment_recovers_observed_mean() {
        // all units received the trajectory exactly: estimate = mean(Y)
        let n = 200;
        let schema = vec![
            ColumnRole::baseline("l", ValueKind::Continuous),
            ColumnRole::treatment("a0", 0),
            ColumnRole::outcome("y0", 0, ValueKind::Continuous),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let l = rng.random::<f64>();
                vec![l, 2.5, 1.0 + l]
            })
            .collect();
        let data = LongitudinalDataset::from_rows(&schema, &rows).unwrap();
        let grid = InterventionGrid::constant(&[2.5], 0).unwrap();
        let mut cfg = EstimatorConfig::sequential(1);
        cfg.stack = LearnerStackSpec::single(LearnerKind::Ols);
        let est = estimate_cdrc_sequential(&data, &grid, &cfg).unwrap();
        let ybar: f64 = (0..n).map(|r| data.value(r, 2)).sum::<f64>() / n as f64;
        assert!((est.value(0, 0) - ybar).abs() < 1e-9);
    }

    #[test]
    fn weighted_all_unit_weights_matches_sequential_bitwise() {
        let data = one_period(400, 11);
        let grid = InterventionGrid::constant(&[0.5, 1.5], 0).unwrap();
        let mut cfg = EstimatorConfig::sequential(21);
        cfg.stack = LearnerStackSpec::of(&[LearnerKind::Ols, LearnerKind::MeanOnly], 5);
        let seq = estimate_cdrc_sequential(&data, &grid, &cfg).unwrap();

        let mut wcfg = cfg.clone();
        wcfg.estimand = EstimandKind::Weighted;
        wcfg.weights = Some(WeightPlan::simple(1e-300).unwrap());
        let run = estimate_weighted(&data, &grid, &wcfg).unwrap();
        assert!(run.records.iter().all(|r| r.record.branch.is_unit()));
        for j in 0..2 {
            assert_eq!(seq.value(j, 0).to_bits(), run.curve.value(j, 0).to_bits());
        }
    }

    #[test]
    fn audit_counts_match_recursion_depth() {
        let data = two_period(300, 13);
        let grid = InterventionGrid::constant(&[0.5, 1.0], 1).unwrap();
        let mut cfg = EstimatorConfig::weighted(WeightPlan::simple(0.01).unwrap(), 2);
        cfg.stack = LearnerStackSpec::single(LearnerKind::Ols);
        let run = estimate_weighted(&data, &grid, &cfg).unwrap();
        for &(t, _j, c) in &run.audit.outcome_regressions {
            assert_eq!(c, t + 1);
        }
        for &(t, _j, c) in &run.audit.weight_stages {
            assert_eq!(c, t + 1);
        }
    }

    fn two_period(n: usize, seed: u64) -> LongitudinalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = vec![
            ColumnRole::baseline("l0", ValueKind::Continuous),
            ColumnRole::treatment("a0", 0),
            ColumnRole::outcome("y0", 0, ValueKind::Continuous),
            ColumnRole::covariate("l1", 1, ValueKind::Continuous),
            ColumnRole::treatment("a1", 1),
            ColumnRole::outcome("y1", 1, ValueKind::Continuous),
        ];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let l0 = rng.random::<f64>();
                let a0 = l0 + rng.random::<f64>();
                let y0 = a0 + 0.5 * l0 + 0.1 * rng.random::<f64>();
                let l1 = 0.5 * l0 + 0.3 * a0 + 0.2 * rng.random::<f64>();
                let a1 = 0.8 * a0 + l1 + rng.random::<f64>();
                let y1 = 0.5 * a1 + 0.25 * a0 + l1 + 0.1 * rng.random::<f64>();
                vec![l0, a0, y0, l1, a1, y1]
            })
            .collect();
        LongitudinalDataset::from_rows(&schema, &rows).unwrap()
    }

    #[test]
    fn seeded_determinism_bytes() {
        let data = two_period(250, 17);
        let grid = InterventionGrid::constant(&[0.5, 1.5], 1).unwrap();
        let mut cfg = EstimatorConfig::weighted(WeightPlan::simple(0.05).unwrap(), 33);
        cfg.stack = LearnerStackSpec::of(&[LearnerKind::Ols, LearnerKind::stumps()], 5);
        let a = estimate_weighted(&data, &grid, &cfg).unwrap();
        let b = estimate_weighted(&data, &grid, &cfg).unwrap();
        assert_eq!(
            a.curve.to_csv_string().unwrap(),
            b.curve.to_csv_string().unwrap()
        );
    }

    #[test]
    fn parametric_null_system_is_flat() {
        // Y independent of A: the parametric curve is flat at the marginal mean
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 2000;
        let schema = vec![
            ColumnRole::baseline("l", ValueKind::Continuous),
            ColumnRole::treatment("a0", 0),
            ColumnRole::outcome("y0", 0, ValueKind::Continuous),
        ];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let l = rng.random::<f64>();
                let a = rng.random::<f64>() * 3.0;
                let y = 2.0 + l + 0.3 * (rng.random::<f64>() - 0.5);
                vec![l, a, y]
            })
            .collect();
        let data = LongitudinalDataset::from_rows(&schema, &rows).unwrap();
        let grid = InterventionGrid::constant(&[0.0, 1.5, 3.0], 0).unwrap();
        let mut cfg = EstimatorConfig::parametric(4);
        cfg.parametric = Some(ParametricSpec::default_for(&data));
        cfg.monte_carlo_draws = 20_000;
        let est = estimate_cdrc_parametric(&data, &grid, &cfg).unwrap();
        let ybar: f64 = (0..n).map(|r| data.value(r, 2)).sum::<f64>() / n as f64;
        let mc_err = 3.0 / (20_000.0_f64).sqrt();
        for j in 0..3 {
            assert!(
                (est.value(j, 0) - ybar).abs() < mc_err + 0.02,
                "traj {j}: {} vs {ybar}",
                est.value(j, 0)
            );
        }
    }

    #[test]
    fn parametric_linear_gaussian_closed_form() {
        // L ~ N-ish uniform, A|L, Y = b0 + ba A + bl L: E(Y^a) = b0 + ba a + bl E(L)
        let data = one_period(4000, 23);
        let grid = InterventionGrid::constant(&[0.5, 1.0, 2.0], 0).unwrap();
        let mut cfg = EstimatorConfig::parametric(8);
        cfg.parametric = Some(ParametricSpec::default_for(&data));
        cfg.monte_carlo_draws = 50_000;
        let est = estimate_cdrc_parametric(&data, &grid, &cfg).unwrap();
        let el = 1.0; // E(L) for U(0,2)
        for (j, &a) in [0.5, 1.0, 2.0].iter().enumerate() {
            let expect = 1.0 + 2.0 * a + el;
            assert!(
                (est.value(j, 0) - expect).abs() < 0.05,
                "a={a}: {} vs {expect}",
                est.value(j, 0)
            );
        }
    }

    #[test]
    fn parametric_requires_declared_conditionals() {
        let data = one_period(100, 2);
        let grid = InterventionGrid::constant(&[1.0], 0).unwrap();
        let cfg = EstimatorConfig::parametric(1);
        assert!(matches!(
            estimate_cdrc_parametric(&data, &grid, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn grid_horizon_mismatch_rejected() {
        let data = one_period(50, 2);
        let grid = InterventionGrid::constant(&[1.0], 3).unwrap();
        let cfg = EstimatorConfig::sequential(1);
        assert!(estimate_cdrc_sequential(&data, &grid, &cfg).is_err());
    }

    #[test]
    fn undefined_flag_set_when_marginal_below_c() {
        let data = one_period(500, 31);
        let grid = InterventionGrid::constant(&[1.0], 0).unwrap();
        // c = 1 exceeds any Gaussian marginal density here
        let mut cfg = EstimatorConfig::weighted(WeightPlan::simple(1.0).unwrap(), 3);
        cfg.stack = LearnerStackSpec::single(LearnerKind::Ols);
        let run = estimate_weighted(&data, &grid, &cfg).unwrap();
        assert!(run.curve.is_undefined(0, 0));
        assert!(run.curve.value(0, 0).is_finite());
    }

    #[test]
    fn survival_without_censoring_matches_plain_weighted() {
        // zero censoring, zero prior events: restrictions are vacuous
        let mut data = two_period(300, 41);
        // make outcomes binary-monotone: set all y to 0 except late events
        let y0 = data.outcome_col(0);
        let y1 = data.outcome_col(1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> = (0..data.n_rows())
            .map(|r| {
                let mut row: Vec<f64> =
                    (0..data.n_cols()).map(|c| data.value(r, c)).collect();
                row[y0] = 0.0;
                row[y1] = if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 };
                row
            })
            .collect();
        let mut schema = data.columns().to_vec();
        schema[y0].value_kind = ValueKind::Binary;
        schema[y1].value_kind = ValueKind::Binary;
        data = LongitudinalDataset::from_rows(&schema, &rows).unwrap();

        let grid = InterventionGrid::constant(&[0.5, 1.5], 1).unwrap();
        let mut cfg = EstimatorConfig::weighted(WeightPlan::simple(0.01).unwrap(), 5);
        cfg.stack = LearnerStackSpec::single(LearnerKind::Ols);
        let plain = estimate_weighted(&data, &grid, &cfg).unwrap();
        let surv = estimate_weighted_survival(&data, &grid, &cfg).unwrap();
        for j in 0..2 {
            for t in 0..2 {
                let d = (plain.curve.value(j, t) - surv.curve.value(j, t)).abs();
                assert!(d < 1e-9, "cell ({j},{t}): {d}");
            }
        }
    }

    #[test]
    fn all_events_at_baseline_give_unit_curve() {
        let n = 120;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let schema = vec![
            ColumnRole::baseline("l0", ValueKind::Continuous),
            ColumnRole::treatment("a0", 0),
            ColumnRole::outcome("y0", 0, ValueKind::Binary),
            ColumnRole::covariate("l1", 1, ValueKind::Continuous),
            ColumnRole::treatment("a1", 1),
            ColumnRole::outcome("y1", 1, ValueKind::Binary),
        ];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let l0 = rng.random::<f64>();
                let a0 = l0 + rng.random::<f64>();
                let l1 = rng.random::<f64>();
                let a1 = a0 + rng.random::<f64>();
                vec![l0, a0, 1.0, l1, a1, 1.0]
            })
            .collect();
        let data = LongitudinalDataset::from_rows(&schema, &rows).unwrap();
        let grid = InterventionGrid::constant(&[0.5, 1.0], 1).unwrap();
        let mut cfg = EstimatorConfig::sequential(1);
        cfg.stack = LearnerStackSpec::single(LearnerKind::Ols);
        cfg.survival = true;
        let run = estimate_weighted_survival(&data, &grid, &cfg).unwrap();
        for j in 0..2 {
            for t in 0..2 {
                assert!((run.curve.value(j, t) - 1.0).abs() < 1e-9);
            }
        }
    }
}

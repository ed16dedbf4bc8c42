//! Thin command-line front end. Subcommands: `simulate`, `estimate`,
//! `diagnose`, `experiment`, `bootstrap`. Every command writes UTF-8 CSV
//! with a header row plus a JSON manifest; data outputs carry a `run_id`
//! column referencing the manifest.
//!
//! Exit codes: 0 success, 1 internal error, 2 success with undefined
//! cells, 3 argument error. `DRCURVE_SEED` and `DRCURVE_THREADS` override
//! the seed and thread count when the flags are absent; flag values beat
//! the environment, which beats the config file, which beats defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::data::{load_dataset, load_schema, EstimandKind, InterventionGrid, LongitudinalDataset};
use crate::density::DensityStrategy;
use crate::dgp::{self, ExperimentEstimator, ExperimentSpec, SystemId};
use crate::error::{Error, Result};
use crate::gcomp::{self, BinLayoutChoice, EstimatorConfig, LearnerStackSpec, ParametricSpec};
use crate::inference;
use crate::learners::LearnerKind;
use crate::manifest::{stamp_csv, RunManifest};
use crate::stack::ScreenMethod;
use crate::weights::{write_weight_records_csv, WeightPlan, WeightVariant};
use crate::diagnostics;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_UNDEFINED_CELLS: i32 = 2;
pub const EXIT_ARGS: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "drcurve",
    version,
    about = "Dose-response curves for continuous longitudinal interventions"
)]
struct Cli {
    /// JSON config file supplying defaults for flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset from a built-in simulation system.
    Simulate(SimulateArgs),
    /// Estimate dose-response curves from a CSV dataset.
    Estimate(EstimateArgs),
    /// Positivity diagnostics: weight proportions and binned support.
    Diagnose(DiagnoseArgs),
    /// Monte-Carlo bias study against brute-force counterfactual truth.
    Experiment(ExperimentArgs),
    /// Percentile bootstrap bands for one estimator configuration.
    Bootstrap(BootstrapArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// System id: sim1 | sim2 | sim3.
    #[arg(long)]
    system: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; the JSON schema sidecar lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Constant-over-time grid as lo:hi:step (inclusive).
    #[arg(long)]
    grid: Option<String>,
    /// Constant-over-time grid as a comma list of values.
    #[arg(long)]
    grid_values: Option<String>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON schema sidecar (column name, role, time_index, value_kind).
    #[arg(long)]
    schema: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// cdrc_sequential | cdrc_parametric | weighted.
    #[arg(long)]
    estimand: String,
    /// Truncation constants (weighted only), comma list: one curve per c.
    #[arg(long)]
    c: Option<String>,
    /// Weight variant: simple | fallback.
    #[arg(long)]
    variant: Option<String>,
    /// Censoring/survival variant of the iterated algorithm.
    #[arg(long, default_value_t = false)]
    survival: bool,
    /// Density strategy: gaussian | binning.
    #[arg(long)]
    density: Option<String>,
    /// Bins for the binning density: an integer (equal-frequency) or
    /// "grid" (aligned to the intervention grid).
    #[arg(long)]
    bins: Option<String>,
    /// Learner set, comma list of mean,median,ols,poly2,ridge,lasso,logistic,stumps.
    #[arg(long)]
    learners: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// Screening: lasso | assoc | assoc:<threshold>.
    #[arg(long)]
    screen: Option<String>,
    /// Target times, comma list (default: all).
    #[arg(long)]
    times: Option<String>,
    /// Bootstrap replicates; bands are written when B > 0.
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo draws for the parametric estimator.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Comma list of truncation constants for the proportion surface.
    #[arg(long)]
    c_grid: Option<String>,
    #[arg(long)]
    density: Option<String>,
    /// Bins for the binning density: an integer or "grid".
    #[arg(long)]
    bins: Option<String>,
    #[arg(long, default_value_t = false)]
    survival: bool,
    /// Covariate-adjusted binned support instead of the marginal version.
    #[arg(long, default_value_t = false)]
    covariate_adjusted: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// System id: sim1 | sim2 | sim3.
    #[arg(long)]
    system: String,
    /// Estimator specs, comma list: cdrc_sequential | cdrc_parametric |
    /// weighted:c=<value>[:variant=simple|fallback].
    #[arg(long)]
    estimators: String,
    #[arg(long)]
    r: usize,
    /// Sample sizes, comma list (one report per n).
    #[arg(long)]
    n: String,
    #[command(flatten)]
    grid: GridArgs,
    /// Target times, comma list (default: all).
    #[arg(long)]
    times: Option<String>,
    #[arg(long)]
    learners: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    screen: Option<String>,
    /// Draws for the counterfactual truth oracle.
    #[arg(long)]
    truth_draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct BootstrapArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    estimand: String,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, default_value_t = false)]
    survival: bool,
    #[arg(long)]
    b: usize,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    learners: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    screen: Option<String>,
    #[arg(long)]
    times: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Config-file defaults (flags beat these; these beat built-ins).
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    learners: Option<String>,
    folds: Option<usize>,
    density: Option<String>,
    bins: Option<String>,
    variant: Option<String>,
    screen: Option<String>,
    level: Option<f64>,
    truth_draws: Option<usize>,
    draws: Option<usize>,
}

fn parse_bins(s: &str) -> Result<BinLayoutChoice> {
    if s == "grid" {
        return Ok(BinLayoutChoice::GridAligned);
    }
    let b: usize =
        s.parse().map_err(|_| Error::Args(format!("bins must be an integer or 'grid', got '{s}'")))?;
    if b < 2 {
        return Err(Error::Args("need at least two bins".into()));
    }
    Ok(BinLayoutChoice::EqualFrequency { bins: b })
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_ARGS,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(Error::Args(msg)) => {
            eprintln!("argument error: {msg}");
            EXIT_ARGS
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INTERNAL
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let file_cfg: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Args(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Args(format!("config file: {e}")))?
        }
        None => FileConfig::default(),
    };

    let threads = cli
        .threads
        .or_else(|| env_parse("DRCURVE_THREADS"))
        .or(file_cfg.threads);
    if let Some(t) = threads {
        // ignore failure when a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }

    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, &file_cfg),
        Command::Estimate(args) => cmd_estimate(args, &file_cfg),
        Command::Diagnose(args) => cmd_diagnose(args, &file_cfg),
        Command::Experiment(args) => cmd_experiment(args, &file_cfg),
        Command::Bootstrap(args) => cmd_bootstrap(args, &file_cfg),
    }
}

fn env_parse<T: FromStr>(key: &str) -> Option<T> {
    std::env::var(key).ok().and_then(|v| v.parse().ok())
}

fn effective_seed(flag: Option<u64>, file: &FileConfig) -> u64 {
    flag.or_else(|| env_parse("DRCURVE_SEED")).or(file.seed).unwrap_or(1)
}

fn parse_comma_f64(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Args(format!("cannot parse number '{v}'")))
        })
        .collect()
}

fn parse_comma_usize(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Args(format!("cannot parse integer '{v}'")))
        })
        .collect()
}

fn parse_grid(args: &GridArgs, t_max: usize) -> Result<InterventionGrid> {
    let values = match (&args.grid, &args.grid_values) {
        (Some(range), None) => {
            let parts: Vec<&str> = range.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Args("grid range must be lo:hi:step".into()));
            }
            let lo: f64 =
                parts[0].parse().map_err(|_| Error::Args("bad grid lower bound".into()))?;
            let hi: f64 =
                parts[1].parse().map_err(|_| Error::Args("bad grid upper bound".into()))?;
            let step: f64 =
                parts[2].parse().map_err(|_| Error::Args("bad grid step".into()))?;
            if step <= 0.0 || hi < lo {
                return Err(Error::Args("grid range needs lo <= hi and step > 0".into()));
            }
            let mut v = Vec::new();
            let mut x = lo;
            let mut k = 0usize;
            while x <= hi + 1e-12 {
                v.push(x);
                k += 1;
                x = lo + k as f64 * step;
            }
            v
        }
        (None, Some(list)) => parse_comma_f64(list)?,
        _ => {
            return Err(Error::Args(
                "exactly one of --grid or --grid-values is required".into(),
            ))
        }
    };
    InterventionGrid::constant(&values, t_max)
}

fn parse_learners(s: &str) -> Result<Vec<LearnerKind>> {
    s.split(',')
        .map(|tok| match tok.trim() {
            "mean" | "mean_only" => Ok(LearnerKind::MeanOnly),
            "median" | "median_only" => Ok(LearnerKind::MedianOnly),
            "ols" => Ok(LearnerKind::Ols),
            "poly2" | "polynomial" => Ok(LearnerKind::PolynomialOls { degree: 2 }),
            "ridge" => Ok(LearnerKind::Ridge { lambda: 1e-3 }),
            "lasso" => Ok(LearnerKind::Lasso),
            "logistic" => Ok(LearnerKind::Logistic),
            "stumps" | "trees" => Ok(LearnerKind::stumps()),
            other => Err(Error::Args(format!("unknown learner '{other}'"))),
        })
        .collect()
}

fn parse_screen(s: &str) -> Result<ScreenMethod> {
    match s {
        "lasso" => Ok(ScreenMethod::LassoPath),
        "assoc" => Ok(ScreenMethod::association_default()),
        other => {
            if let Some(thr) = other.strip_prefix("assoc:") {
                let t: f64 =
                    thr.parse().map_err(|_| Error::Args("bad screening threshold".into()))?;
                Ok(ScreenMethod::AssociationScreen { threshold: t })
            } else {
                Err(Error::Args(format!("unknown screening method '{other}'")))
            }
        }
    }
}

fn parse_density(s: &str) -> Result<DensityStrategy> {
    match s {
        "gaussian" | "gaussian_regression" => Ok(DensityStrategy::GaussianRegression),
        "binning" => Ok(DensityStrategy::Binning),
        other => Err(Error::Args(format!("unknown density strategy '{other}'"))),
    }
}

fn parse_variant(s: &str) -> Result<WeightVariant> {
    match s {
        "simple" => Ok(WeightVariant::Simple),
        "fallback" => Ok(WeightVariant::Fallback),
        other => Err(Error::Args(format!("unknown weight variant '{other}'"))),
    }
}

fn parse_estimand(s: &str) -> Result<EstimandKind> {
    match s {
        "cdrc_sequential" | "sequential" => Ok(EstimandKind::CdrcSequential),
        "cdrc_parametric" | "parametric" => Ok(EstimandKind::CdrcParametric),
        "weighted" => Ok(EstimandKind::Weighted),
        other => Err(Error::Args(format!(
            "unknown estimand '{other}' (cdrc_sequential | cdrc_parametric | weighted)"
        ))),
    }
}

struct CommonModeling {
    stack: LearnerStackSpec,
    screening: Option<ScreenMethod>,
    density: DensityStrategy,
    bin_layout: BinLayoutChoice,
}

fn modeling_options(
    learners: Option<&str>,
    folds: Option<usize>,
    screen: Option<&str>,
    density: Option<&str>,
    bins: Option<&str>,
    file: &FileConfig,
) -> Result<CommonModeling> {
    let mut stack = LearnerStackSpec::default();
    if let Some(l) = learners.or(file.learners.as_deref()) {
        stack.kinds = parse_learners(l)?;
        if stack.kinds.is_empty() {
            return Err(Error::Args("empty learner list".into()));
        }
    }
    if let Some(f) = folds.or(file.folds) {
        stack.folds = f;
    }
    let screening = match screen.or(file.screen.as_deref()) {
        Some(s) => Some(parse_screen(s)?),
        None => None,
    };
    let density = match density.or(file.density.as_deref()) {
        Some(d) => parse_density(d)?,
        None => DensityStrategy::GaussianRegression,
    };
    let bin_layout = match bins.or(file.bins.as_deref()) {
        Some(b) => parse_bins(b)?,
        None => BinLayoutChoice::EqualFrequency { bins: 20 },
    };
    Ok(CommonModeling { stack, screening, density, bin_layout })
}

fn load_inputs(data: &Path, schema: &Path) -> Result<LongitudinalDataset> {
    let schema = load_schema(schema)?;
    load_dataset(data, &schema)
}

fn write_stamped(path: &Path, csv_text: &str, run_id: &str) -> Result<()> {
    std::fs::write(path, stamp_csv(csv_text, run_id))?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, file: &FileConfig) -> Result<i32> {
    let system: SystemId = args.system.parse()?;
    if args.n == 0 {
        return Err(Error::Args("n must be at least 1".into()));
    }
    let seed = effective_seed(args.seed, file);
    let data = dgp::simulate(system, args.n, seed)?;
    let schema_path = args.out.with_extension("schema.json");
    data.save(&args.out, &schema_path)?;

    let mut manifest = RunManifest::new(
        "simulate",
        serde_json::json!({"system": args.system, "n": args.n, "seed": seed}),
        seed,
    );
    manifest.add_output_file(&args.out)?;
    manifest.add_output_file(&schema_path)?;
    manifest.write(&args.out.with_extension("manifest.json"))?;
    println!(
        "wrote {} ({} rows, {} columns) and {}",
        args.out.display(),
        data.n_rows(),
        data.n_cols(),
        schema_path.display()
    );
    Ok(EXIT_OK)
}

fn cmd_estimate(args: EstimateArgs, file: &FileConfig) -> Result<i32> {
    let data = load_inputs(&args.data, &args.schema)?;
    let grid = parse_grid(&args.grid, data.t_max())?;
    let estimand = parse_estimand(&args.estimand)?;
    let seed = effective_seed(args.seed, file);
    let modeling = modeling_options(
        args.learners.as_deref(),
        args.folds,
        args.screen.as_deref(),
        args.density.as_deref(),
        args.bins.as_deref(),
        file,
    )?;
    let c_list: Vec<f64> = match (&args.c, estimand) {
        (Some(list), EstimandKind::Weighted) => parse_comma_f64(list)?,
        (None, EstimandKind::Weighted) => {
            return Err(Error::Args("weighted estimation needs --c".into()))
        }
        (Some(_), _) => {
            return Err(Error::Args("--c only applies to the weighted estimand".into()))
        }
        (None, _) => vec![],
    };
    let variant = match args.variant.as_deref().or(file.variant.as_deref()) {
        Some(v) => parse_variant(v)?,
        None => WeightVariant::Fallback,
    };
    let target_times = match &args.times {
        Some(t) => Some(parse_comma_usize(t)?),
        None => None,
    };

    std::fs::create_dir_all(&args.out_dir)?;
    let mut base_cfg = EstimatorConfig::sequential(seed);
    base_cfg.estimand = estimand;
    base_cfg.survival = args.survival;
    base_cfg.stack = modeling.stack;
    base_cfg.screening = modeling.screening;
    base_cfg.density = modeling.density;
    base_cfg.bin_layout = modeling.bin_layout;
    base_cfg.target_times = target_times;
    if estimand == EstimandKind::CdrcParametric {
        base_cfg.parametric = Some(ParametricSpec::default_for(&data));
        if let Some(d) = args.draws.or(file.draws) {
            base_cfg.monte_carlo_draws = d;
        }
    }

    let mut manifest = RunManifest::new(
        "estimate",
        serde_json::json!({
            "estimand": args.estimand,
            "c": c_list,
            "variant": format!("{variant:?}"),
            "survival": args.survival,
            "learners": base_cfg.stack.kinds.iter().map(|k| k.label()).collect::<Vec<_>>(),
            "folds": base_cfg.stack.folds,
            "screening": base_cfg.screening.map(|s| format!("{s:?}")),
            "density": format!("{:?}", base_cfg.density),
            "bins": format!("{:?}", base_cfg.bin_layout),
            "target_times": base_cfg.target_times,
            "seed": seed,
            "bootstrap": args.bootstrap,
            "level": args.level.or(file.level).unwrap_or(0.95),
        }),
        seed,
    );
    manifest.add_input_file(&args.data)?;
    manifest.add_input_file(&args.schema)?;
    let run_id = manifest.run_id.clone();

    let mut undefined_cells: Vec<String> = Vec::new();
    let mut outputs: Vec<PathBuf> = Vec::new();

    let configs: Vec<(Option<f64>, EstimatorConfig)> = if estimand == EstimandKind::Weighted {
        c_list
            .iter()
            .map(|&c| {
                let mut cfg = base_cfg.clone();
                let mut plan = WeightPlan::new(c, variant)?;
                plan.variant = variant;
                cfg.weights = Some(plan);
                Ok((Some(c), cfg))
            })
            .collect::<Result<_>>()?
        } else {
        vec![(None, base_cfg.clone())]
    };

    for (c, cfg) in &configs {
        let suffix = match c {
            Some(c) => format!("{}_c{}", estimand, c),
            None => format!("{}", estimand),
        };
        let curve = if estimand == EstimandKind::Weighted && !args.survival {
            let run = gcomp::estimate_weighted(&data, &grid, cfg)?;
            let rec_path = args
                .out_dir
                .join(format!("weight_records_c{}.csv", c.expect("weighted implies c")));
            let mut buf = Vec::new();
            write_weight_records_csv(&run.records, &mut buf)?;
            write_stamped(&rec_path, &String::from_utf8(buf).unwrap(), &run_id)?;
            outputs.push(rec_path);
            run.curve
        } else {
            gcomp::estimate(&data, &grid, cfg)?
        };

        for j in 0..curve.n_trajectories() {
            for t in 0..curve.values[j].len() {
                if curve.undefined[j][t] {
                    undefined_cells.push(format!(
                        "trajectory {} time {} (c={})",
                        curve.labels[j],
                        t,
                        c.map(|c| c.to_string()).unwrap_or_default()
                    ));
                }
            }
        }
        let path = args.out_dir.join(format!("curve_{suffix}.csv"));
        write_stamped(&path, &curve.to_csv_string()?, &run_id)?;
        outputs.push(path);

        if args.bootstrap > 0 {
            let level = args.level.or(file.level).unwrap_or(0.95);
            let boot = inference::bootstrap(&data, &grid, cfg, args.bootstrap, level, seed)?;
            let mut buf = Vec::new();
            boot.write_csv(&mut buf)?;
            let path = args.out_dir.join(format!("bands_{suffix}.csv"));
            write_stamped(&path, &String::from_utf8(buf).unwrap(), &run_id)?;
            outputs.push(path);
        }
    }

    for p in &outputs {
        manifest.add_output_file(p)?;
    }
    manifest.write(&args.out_dir.join("manifest.json"))?;

    if undefined_cells.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("undefined cells:");
        for cell in &undefined_cells {
            eprintln!("  {cell}");
        }
        Ok(EXIT_UNDEFINED_CELLS)
    }
}

fn cmd_diagnose(args: DiagnoseArgs, file: &FileConfig) -> Result<i32> {
    let data = load_inputs(&args.data, &args.schema)?;
    let grid = parse_grid(&args.grid, data.t_max())?;
    let seed = effective_seed(args.seed, file);
    let c_grid = match &args.c_grid {
        Some(s) => parse_comma_f64(s)?,
        None => vec![0.001, 0.01, 0.025, 0.2, 1.0],
    };
    if c_grid.iter().any(|&c| c <= 0.0) {
        return Err(Error::Args("c grid values must be positive".into()));
    }
    let modeling = modeling_options(
        None,
        None,
        None,
        args.density.as_deref(),
        args.bins.as_deref(),
        file,
    )?;

    std::fs::create_dir_all(&args.out_dir)?;
    let mut cfg = EstimatorConfig::sequential(seed);
    cfg.estimand = EstimandKind::Weighted;
    cfg.weights = Some(WeightPlan::simple(c_grid[0])?);
    cfg.density = modeling.density;
    cfg.bin_layout = modeling.bin_layout;

    let records = gcomp::compute_weight_records(&data, &grid, &cfg, args.survival)?;
    let proportions = diagnostics::weight_proportion_surface(&records, &c_grid, &grid)?;
    let support = diagnostics::binned_support_with(
        &data,
        &grid,
        &diagnostics::BinnedSupportOptions { covariate_adjusted: args.covariate_adjusted },
    )?;

    let mut manifest = RunManifest::new(
        "diagnose",
        serde_json::json!({
            "c_grid": c_grid,
            "covariate_adjusted": args.covariate_adjusted,
            "survival": args.survival,
            "seed": seed,
        }),
        seed,
    );
    manifest.add_input_file(&args.data)?;
    manifest.add_input_file(&args.schema)?;
    let run_id = manifest.run_id.clone();

    let mut buf = Vec::new();
    proportions.write_weight_proportion_csv(&mut buf)?;
    let prop_path = args.out_dir.join("weight_proportions.csv");
    write_stamped(&prop_path, &String::from_utf8(buf).unwrap(), &run_id)?;

    let mut buf = Vec::new();
    support.write_binned_support_csv(&mut buf)?;
    let supp_path = args.out_dir.join("binned_support.csv");
    write_stamped(&supp_path, &String::from_utf8(buf).unwrap(), &run_id)?;

    manifest.add_output_file(&prop_path)?;
    manifest.add_output_file(&supp_path)?;
    manifest.write(&args.out_dir.join("manifest.json"))?;
    Ok(EXIT_OK)
}

/// Estimator spec tokens: `cdrc_sequential`, `cdrc_parametric`,
/// `weighted:c=<value>[:variant=simple|fallback]`.
fn parse_estimator_spec(
    token: &str,
    base: &EstimatorConfig,
    survival: bool,
) -> Result<ExperimentEstimator> {
    let mut parts = token.split(':');
    let head = parts.next().unwrap_or_default();
    let mut cfg = base.clone();
    cfg.estimand = parse_estimand(head)?;
    cfg.survival = survival && cfg.estimand != EstimandKind::CdrcParametric;
    let mut c: Option<f64> = None;
    let mut variant = WeightVariant::Simple;
    for part in parts {
        if let Some(v) = part.strip_prefix("c=") {
            c = Some(v.parse().map_err(|_| Error::Args(format!("bad c in '{token}'")))?);
        } else if let Some(v) = part.strip_prefix("variant=") {
            variant = parse_variant(v)?;
        } else {
            return Err(Error::Args(format!("unknown estimator option '{part}'")));
        }
    }
    match cfg.estimand {
        EstimandKind::Weighted => {
            let c = c.ok_or_else(|| {
                Error::Args(format!("weighted spec '{token}' needs c=<value>"))
            })?;
            cfg.weights = Some(WeightPlan::new(c, variant)?);
        }
        _ => {
            if c.is_some() {
                return Err(Error::Args(format!("'{token}': c only applies to weighted")));
            }
        }
    }
    Ok(ExperimentEstimator { name: token.to_string(), config: cfg })
}

fn cmd_experiment(args: ExperimentArgs, file: &FileConfig) -> Result<i32> {
    let system: SystemId = args.system.parse()?;
    let seed = effective_seed(args.seed, file);
    let sizes = parse_comma_usize(&args.n)?;
    if sizes.is_empty() {
        return Err(Error::Args("need at least one sample size".into()));
    }
    let grid = if args.grid.grid.is_some() || args.grid.grid_values.is_some() {
        parse_grid(&args.grid, system.t_max())?
    } else {
        system.default_grid()
    };
    let modeling = modeling_options(
        args.learners.as_deref(),
        args.folds,
        args.screen.as_deref(),
        None,
        None,
        file,
    )?;
    let target_times = match &args.times {
        Some(t) => Some(parse_comma_usize(t)?),
        None => None,
    };

    let mut base = EstimatorConfig::sequential(seed);
    base.stack = modeling.stack;
    base.screening = modeling.screening;
    base.target_times = target_times;

    let estimators: Vec<ExperimentEstimator> = args
        .estimators
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let mut est = parse_estimator_spec(t.trim(), &base, system.is_survival())?;
            if est.config.estimand == EstimandKind::CdrcParametric {
                est.config.parametric = None; // filled per replicate dataset below
            }
            Ok(est)
        })
        .collect::<Result<_>>()?;
    if estimators.is_empty() {
        return Err(Error::Args("empty estimator set".into()));
    }
    // the parametric spec depends only on the schema, which is fixed per system
    let probe = dgp::simulate(system, 50.max(sizes[0].min(50)), seed)?;
    let estimators: Vec<ExperimentEstimator> = estimators
        .into_iter()
        .map(|mut e| {
            if e.config.estimand == EstimandKind::CdrcParametric {
                e.config.parametric = Some(ParametricSpec::default_for(&probe));
                if let Some(d) = file.draws {
                    e.config.monte_carlo_draws = d;
                }
            }
            e
        })
        .collect();

    std::fs::create_dir_all(&args.out_dir)?;
    let truth_draws = args.truth_draws.or(file.truth_draws).unwrap_or(1_000_000);

    let mut manifest = RunManifest::new(
        "experiment",
        serde_json::json!({
            "system": args.system,
            "estimators": args.estimators,
            "r": args.r,
            "n": sizes,
            "seed": seed,
            "truth_draws": truth_draws,
        }),
        seed,
    );
    let run_id = manifest.run_id.clone();

    for &n in &sizes {
        let spec = ExperimentSpec {
            system,
            estimators: estimators.clone(),
            grid: grid.clone(),
            r: args.r,
            n,
            seed,
            truth_draws,
        };
        let report = dgp::run_experiment(&spec)?;
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        let path = args.out_dir.join(format!("report_n{n}.csv"));
        write_stamped(&path, &String::from_utf8(buf).unwrap(), &run_id)?;
        manifest.add_output_file(&path)?;
    }
    manifest.write(&args.out_dir.join("manifest.json"))?;
    Ok(EXIT_OK)
}

fn cmd_bootstrap(args: BootstrapArgs, file: &FileConfig) -> Result<i32> {
    let data = load_inputs(&args.data, &args.schema)?;
    let grid = parse_grid(&args.grid, data.t_max())?;
    let estimand = parse_estimand(&args.estimand)?;
    let seed = effective_seed(args.seed, file);
    let modeling = modeling_options(
        args.learners.as_deref(),
        args.folds,
        args.screen.as_deref(),
        None,
        None,
        file,
    )?;

    let mut cfg = EstimatorConfig::sequential(seed);
    cfg.estimand = estimand;
    cfg.survival = args.survival;
    cfg.stack = modeling.stack;
    cfg.screening = modeling.screening;
    cfg.target_times = match &args.times {
        Some(t) => Some(parse_comma_usize(t)?),
        None => None,
    };
    if estimand == EstimandKind::Weighted {
        let c = args.c.ok_or_else(|| Error::Args("weighted bootstrap needs --c".into()))?;
        let variant = match args.variant.as_deref().or(file.variant.as_deref()) {
            Some(v) => parse_variant(v)?,
            None => WeightVariant::Fallback,
        };
        cfg.weights = Some(WeightPlan::new(c, variant)?);
    } else if args.c.is_some() {
        return Err(Error::Args("--c only applies to the weighted estimand".into()));
    }
    if estimand == EstimandKind::CdrcParametric {
        cfg.parametric = Some(ParametricSpec::default_for(&data));
    }

    let level = args.level.or(file.level).unwrap_or(0.95);
    let result = inference::bootstrap(&data, &grid, &cfg, args.b, level, seed)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let mut manifest = RunManifest::new(
        "bootstrap",
        serde_json::json!({
            "estimand": args.estimand,
            "c": args.c,
            "b": args.b,
            "level": level,
            "seed": seed,
        }),
        seed,
    );
    manifest.add_input_file(&args.data)?;
    manifest.add_input_file(&args.schema)?;
    let run_id = manifest.run_id.clone();

    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    let path = args.out_dir.join("bands.csv");
    write_stamped(&path, &String::from_utf8(buf).unwrap(), &run_id)?;
    manifest.add_output_file(&path)?;
    manifest.write(&args.out_dir.join("manifest.json"))?;

    if result.point.any_undefined() {
        Ok(EXIT_UNDEFINED_CELLS)
    } else {
        Ok(EXIT_OK)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_range_parses_inclusively() {
        let args = GridArgs { grid: Some("2:11:1".into()), grid_values: None };
        let g = parse_grid(&args, 2).unwrap();
        assert_eq!(g.n_trajectories(), 10);
        assert_eq!(g.trajectory(9), &[11.0, 11.0, 11.0]);
    }

    #[test]
    fn estimator_specs_parse() {
        let base = EstimatorConfig::sequential(1);
        let e = parse_estimator_spec("weighted:c=0.01:variant=simple", &base, false).unwrap();
        assert_eq!(e.config.estimand, EstimandKind::Weighted);
        assert_eq!(e.config.weights.unwrap().c, 0.01);
        assert!(parse_estimator_spec("weighted", &base, false).is_err());
        assert!(parse_estimator_spec("cdrc_sequential:c=1", &base, false).is_err());
        let s = parse_estimator_spec("cdrc_sequential", &base, true).unwrap();
        assert!(s.config.survival);
    }

    #[test]
    fn learner_list_parses() {
        let l = parse_learners("mean,ols,poly2,stumps").unwrap();
        assert_eq!(l.len(), 4);
        assert!(parse_learners("nope").is_err());
    }
}

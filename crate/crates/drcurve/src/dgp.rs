//! Built-in structural-equation systems for simulation studies, with
//! interventional sampling (forced treatment trajectories, censoring
//! switched off) for brute-force counterfactual truth, and a Monte-Carlo
//! experiment runner.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    ColumnRole, CurveEstimate, EstimandKind, EstimateMeta, InterventionGrid, LongitudinalDataset,
    Role, ValueKind,
};
use crate::error::{Error, Result};
use crate::gcomp::{self, EstimatorConfig};
use crate::util::{split_seed, split_seed_n};

/// Truncation spec for a normal draw with uniform tail replacement:
/// draws below `a` are replaced by U(a1, a2), draws above `b` by U(b1, b2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncSpec {
    pub a: f64,
    pub a1: f64,
    pub a2: f64,
    pub b: f64,
    pub b1: f64,
    pub b2: f64,
}

impl TruncSpec {
    pub fn new(a: f64, a1: f64, a2: f64, b: f64, b1: f64, b2: f64) -> Self {
        assert!(a1 <= a2 && b1 <= b2);
        TruncSpec { a, a1, a2, b, b1, b2 }
    }
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn draw_normal(rng: &mut ChaCha8Rng, mu: f64, sigma: f64) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    mu + sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn draw_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Normal draw with uniform tail replacement.
pub fn sample_trunc_normal(spec: &TruncSpec, mu: f64, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    let x = draw_normal(rng, mu, sigma);
    if x < spec.a {
        draw_uniform(rng, spec.a1, spec.a2)
    } else if x > spec.b {
        draw_uniform(rng, spec.b1, spec.b2)
    } else {
        x
    }
}

fn draw_bernoulli(rng: &mut ChaCha8Rng, p: f64) -> f64 {
    if rng.random::<f64>() < p.clamp(0.0, 1.0) {
        1.0
    } else {
        0.0
    }
}

/// Draw a category 1..=k from (possibly unnormalized) probabilities.
/// Negative entries clamp to zero and the vector renormalizes to one.
fn draw_multinomial(rng: &mut ChaCha8Rng, probs: &[f64]) -> f64 {
    let clamped: Vec<f64> = probs.iter().map(|&p| p.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let u: f64 = rng.random::<f64>() * if total > 0.0 { total } else { 1.0 };
    let mut cum = 0.0;
    for (i, &p) in clamped.iter().enumerate() {
        cum += p;
        if u < cum {
            return (i + 1) as f64;
        }
    }
    clamped.len() as f64
}

type MeanFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Sampling distribution of one node, with mean/probability expressions
/// over the already-sampled prefix of the record.
pub enum NodeDist {
    Bernoulli(MeanFn),
    Normal(MeanFn, f64),
    /// Category probabilities (values 1..=k); normalized if required.
    Multinomial(Vec<MeanFn>),
    TruncNormal(TruncSpec, MeanFn, f64),
}

/// One node of a structural equation system. Nodes are sampled in order;
/// each mean expression only sees the values of earlier nodes, so parents
/// always precede their children.
pub struct Node {
    pub column: ColumnRole,
    pub dist: NodeDist,
}

/// A structural equation system in temporal order.
pub struct StructuralEquationSystem {
    pub nodes: Vec<Node>,
}

/// How treatment nodes are handled during sampling.
#[derive(Debug, Clone)]
pub enum Intervention<'a> {
    /// Draw everything from its own law.
    Observational,
    /// Force treatment nodes to the trajectory (indexed by time) and
    /// censoring nodes to zero.
    Forced { trajectory: &'a [f64] },
    /// Exercise the forcing machinery while forcing each treatment to its
    /// own natural draw (must reproduce the observational law).
    Natural,
}

impl StructuralEquationSystem {
    pub fn schema(&self) -> Vec<ColumnRole> {
        self.nodes.iter().map(|n| n.column.clone()).collect()
    }

    /// Sample one record into `out` (length = number of nodes).
    fn sample_record(&self, rng: &mut ChaCha8Rng, intervention: &Intervention, out: &mut [f64]) {
        for (i, node) in self.nodes.iter().enumerate() {
            let parents = &out[..i];
            let value = match &node.dist {
                NodeDist::Bernoulli(p) => draw_bernoulli(rng, p(parents)),
                NodeDist::Normal(mu, sigma) => draw_normal(rng, mu(parents), *sigma),
                NodeDist::Multinomial(ps) => {
                    let probs: Vec<f64> = ps.iter().map(|p| p(parents)).collect();
                    draw_multinomial(rng, &probs)
                }
                NodeDist::TruncNormal(spec, mu, sigma) => {
                    sample_trunc_normal(spec, mu(parents), *sigma, rng)
                }
            };
            out[i] = match (&node.column.role, intervention) {
                (Role::Treatment, Intervention::Forced { trajectory }) => {
                    trajectory[node.column.time_index.unwrap()]
                }
                (Role::Censoring, Intervention::Forced { .. }) => 0.0,
                (Role::Treatment, Intervention::Natural) => value,
                _ => value,
            };
        }
    }
}

/// Identifier of a built-in simulation system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemId {
    Sim1,
    Sim2,
    Sim3,
}

impl std::str::FromStr for SystemId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim1" => Ok(SystemId::Sim1),
            "sim2" => Ok(SystemId::Sim2),
            "sim3" => Ok(SystemId::Sim3),
            other => Err(Error::Args(format!(
                "unknown system '{other}'; valid ids: sim1, sim2, sim3"
            ))),
        }
    }
}

impl std::fmt::Display for SystemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemId::Sim1 => write!(f, "sim1"),
            SystemId::Sim2 => write!(f, "sim2"),
            SystemId::Sim3 => write!(f, "sim3"),
        }
    }
}

impl SystemId {
    pub fn t_max(&self) -> usize {
        match self {
            SystemId::Sim1 => 2,
            SystemId::Sim2 | SystemId::Sim3 => 4,
        }
    }

    /// The constant-over-time grid each system's evaluation uses.
    pub fn default_grid_values(&self) -> Vec<f64> {
        match self {
            SystemId::Sim1 => (2..=11).map(|v| v as f64).collect(),
            SystemId::Sim2 => (-7..=13).map(|v| v as f64).collect(),
            SystemId::Sim3 => (0..=10).map(|v| v as f64).collect(),
        }
    }

    pub fn default_grid(&self) -> InterventionGrid {
        InterventionGrid::constant(&self.default_grid_values(), self.t_max())
            .expect("built-in grids are valid")
    }

    /// The system's outcome is a survival-style event indicator.
    pub fn is_survival(&self) -> bool {
        matches!(self, SystemId::Sim2)
    }

    pub fn build(&self) -> StructuralEquationSystem {
        match self {
            SystemId::Sim1 => build_sim1(),
            SystemId::Sim2 => build_sim2(),
            SystemId::Sim3 => build_sim3(),
        }
    }
}

// shared confounder block for sim1/sim2 time points
fn confounder_block(
    nodes: &mut Vec<Node>,
    t: usize,
    prev: Option<(usize, usize, usize)>,
) -> (usize, usize) {
    let l1 = nodes.len();
    nodes.push(Node {
        column: ColumnRole::covariate(&format!("l1_{t}"), t, ValueKind::Binary),
        dist: match prev {
            None => NodeDist::Bernoulli(Box::new(|_| 0.3)),
            Some((pl1, pl2, pa)) => NodeDist::Bernoulli(Box::new(move |v| {
                expit(-4.0 + v[pl1] + 0.15 * v[pl2] + 0.15 * v[pa])
            })),
        },
    });
    let l2 = nodes.len();
    nodes.push(Node {
        column: ColumnRole::covariate(&format!("l2_{t}"), t, ValueKind::Continuous),
        dist: match prev {
            None => NodeDist::Normal(Box::new(move |v| -1.0 + 2.0 * v[l1]), 1.0),
            Some((_, pl2, pa)) => NodeDist::Normal(
                Box::new(move |v| 0.5 * v[l1] + 0.25 * v[pl2] + 0.5 * v[pa]),
                1.0,
            ),
        },
    });
    (l1, l2)
}

fn build_sim1() -> StructuralEquationSystem {
    let mut nodes: Vec<Node> = Vec::new();
    let mut prev: Option<(usize, usize, usize)> = None;
    for t in 0..=2 {
        let (l1, l2) = confounder_block(&mut nodes, t, prev);
        let a = nodes.len();
        nodes.push(Node {
            column: ColumnRole::treatment(&format!("a_{t}"), t),
            dist: match prev {
                None => NodeDist::Normal(Box::new(move |v| 7.0 + v[l1] + 0.7 * v[l2]), 1.0),
                Some((_, _, pa)) => {
                    NodeDist::Normal(Box::new(move |v| v[pa] + v[l1] - 0.1 * v[l2]), 0.5)
                }
            },
        });
        nodes.push(Node {
            column: ColumnRole::outcome(&format!("y_{t}"), t, ValueKind::Continuous),
            dist: if t == 0 {
                NodeDist::Normal(Box::new(move |v| -1.0 + 0.5 * v[a] + 0.5 * v[l2]), 1.0)
            } else {
                NodeDist::Normal(
                    Box::new(move |v| -2.0 + 0.25 * v[a] - 0.2 * v[l1] + v[l2]),
                    0.5,
                )
            },
        });
        prev = Some((l1, l2, a));
    }
    StructuralEquationSystem { nodes }
}

fn build_sim2() -> StructuralEquationSystem {
    let mut nodes: Vec<Node> = Vec::new();
    let mut prev: Option<(usize, usize, usize)> = None;
    for t in 0..=4 {
        let (l1, l2) = confounder_block(&mut nodes, t, prev);
        let a = nodes.len();
        nodes.push(Node {
            column: ColumnRole::treatment(&format!("a_{t}"), t),
            dist: match prev {
                None => NodeDist::Normal(Box::new(move |v| 7.0 + v[l1] + 0.7 * v[l2]), 1.0),
                Some((_, _, pa)) => NodeDist::Normal(
                    Box::new(move |v| -2.0 + 0.5 * v[pa] + 0.75 * v[l1] + 0.35 * v[l2]),
                    0.5,
                ),
            },
        });
        if t >= 1 {
            nodes.push(Node {
                column: ColumnRole::censoring(&format!("c_{t}"), t),
                dist: NodeDist::Bernoulli(Box::new(move |v| {
                    expit(-2.0 + 0.5 * v[l1] + 0.2 * v[a])
                })),
            });
        }
        nodes.push(Node {
            column: ColumnRole::outcome(&format!("y_{t}"), t, ValueKind::Binary),
            dist: NodeDist::Bernoulli(Box::new(move |v| {
                expit(-4.0 + 0.2 * v[a] + 0.5 * v[l2])
            })),
        });
        prev = Some((l1, l2, a));
    }
    StructuralEquationSystem { nodes }
}

fn build_sim3() -> StructuralEquationSystem {
    let mut nodes: Vec<Node> = Vec::new();

    let sex = nodes.len();
    nodes.push(Node {
        column: ColumnRole::baseline("sex", ValueKind::Binary),
        dist: NodeDist::Bernoulli(Box::new(|_| 0.5)),
    });
    let genotype = nodes.len();
    nodes.push(Node {
        column: ColumnRole::baseline("genotype", ValueKind::Categorical),
        dist: NodeDist::Multinomial(vec![
            Box::new(move |v| expit(-0.103 + ind(v[sex], 1.0) * 0.223 + ind(v[sex], 0.0) * 0.173)),
            Box::new(move |v| expit(-0.086 + ind(v[sex], 1.0) * 0.198 + ind(v[sex], 0.0) * 0.214)),
            Box::new(move |v| expit(-0.090 + ind(v[sex], 1.0) * 0.082 + ind(v[sex], 0.0) * 1.070)),
        ]),
    });
    let age = nodes.len();
    nodes.push(Node {
        column: ColumnRole::baseline("log_age", ValueKind::Continuous),
        dist: NodeDist::TruncNormal(
            TruncSpec::new(0.693, 0.693, 1.0, 2.8, 2.7, 2.8),
            Box::new(|_| 1.501),
            0.369,
        ),
    });
    let weight0 = nodes.len();
    nodes.push(Node {
        column: ColumnRole::covariate("log_weight_0", 0, ValueKind::Continuous),
        dist: NodeDist::TruncNormal(
            TruncSpec::new(2.26, 2.26, 2.67, 3.37, 3.02, 3.37),
            Box::new(move |v| (1.5 + 0.2 * v[sex] + 0.774 * v[age]) * 0.94),
            0.369,
        ),
    });
    nodes.push(Node {
        column: ColumnRole::baseline("nrti", ValueKind::Categorical),
        dist: NodeDist::Multinomial(vec![
            Box::new(move |v| {
                expit(
                    -0.006
                        + ind_gt(v[age], 1.4563) * v[age] * 0.1735
                        + ind_le(v[age], 1.4563) * v[age] * 0.1570,
                )
            }),
            Box::new(move |v| {
                expit(
                    -0.006
                        + ind_gt(v[age], 1.4563) * v[age] * 0.1735
                        + ind_le(v[age], 1.4563) * v[age] * 0.1570,
                )
            }),
            Box::new(move |v| {
                expit(
                    -0.006
                        + ind_gt(v[age], 1.4563) * v[age] * 0.1570
                        + ind_le(v[age], 0.14563) * v[age] * 0.1818,
                )
            }),
        ]),
    });
    let cm0 = nodes.len();
    nodes.push(Node {
        column: ColumnRole::covariate("cm_0", 0, ValueKind::Binary),
        dist: NodeDist::Bernoulli(Box::new(|_| 0.15)),
    });
    let dose0 = nodes.len();
    nodes.push(Node {
        column: ColumnRole::covariate("dose_0", 0, ValueKind::Categorical),
        dist: NodeDist::Multinomial(vec![
            Box::new(move |v| expit(5.0 + v[weight0].max(0.0).sqrt() * 8.0 - v[age] * 10.0)),
            Box::new(move |v| expit(4.0 + v[weight0].max(0.0).sqrt() * 8.768 - v[age] * 9.06)),
            Box::new(move |v| expit(3.0 + v[weight0].max(0.0).sqrt() * 6.562 - v[age] * 8.325)),
            Box::new(move |v| {
                let p1 = expit(5.0 + v[weight0].max(0.0).sqrt() * 8.0 - v[age] * 10.0);
                let p2 = expit(4.0 + v[weight0].max(0.0).sqrt() * 8.768 - v[age] * 9.06);
                let p3 = expit(3.0 + v[weight0].max(0.0).sqrt() * 6.562 - v[age] * 8.325);
                1.0 - (p1 + p2 + p3)
            }),
        ]),
    });
    let efv0 = nodes.len();
    nodes.push(Node {
        column: ColumnRole::treatment("efv_0", 0),
        dist: NodeDist::TruncNormal(
            TruncSpec::new(0.2032, 0.2032, 0.88, 21.0, 8.376, 21.0),
            Box::new(move |v| {
                -8.0 + v[age] * 0.1
                    + v[genotype] * 4.66
                    + v[dose0] * 0.1
                    + ind_le(v[genotype], 2.0) * 2.66
                    + ind(v[genotype], 3.0) * 4.6
            }),
            4.06,
        ),
    });
    nodes.push(Node {
        column: ColumnRole::outcome("vl_0", 0, ValueKind::Binary),
        dist: NodeDist::Bernoulli(Box::new(move |v| {
            1.0 - expit(0.4 + 1.9 * v[efv0].max(0.0).sqrt())
        })),
    });

    let mut idx_mems: Vec<usize> = vec![usize::MAX];
    let mut idx_weight = vec![weight0];
    let mut idx_cm = vec![cm0];
    let mut idx_dose = vec![dose0];
    for t in 1..=4 {
        let pmems = idx_mems[t - 1];
        let pweight = idx_weight[t - 1];
        let pcm = idx_cm[t - 1];
        let pdose = idx_dose[t - 1];
        let mems = nodes.len();
        nodes.push(Node {
            column: ColumnRole::covariate(&format!("mems_{t}"), t, ValueKind::Binary),
            dist: NodeDist::Bernoulli(Box::new(move |v| {
                let prev = if t >= 2 { v[pmems] } else { 0.0 };
                expit(0.71 + v[pcm] * 0.31 + prev * 0.31)
            })),
        });
        let weight = nodes.len();
        nodes.push(Node {
            column: ColumnRole::covariate(&format!("log_weight_{t}"), t, ValueKind::Continuous),
            dist: NodeDist::TruncNormal(
                TruncSpec::new(2.26, 2.26, 2.473, 3.37, 3.2, 3.37),
                Box::new(move |v| v[pweight] * 1.04 - 0.05 * ind(v[pcm], 1.0)),
                0.4,
            ),
        });
        let cm = nodes.len();
        nodes.push(Node {
            column: ColumnRole::covariate(&format!("cm_{t}"), t, ValueKind::Binary),
            dist: NodeDist::Bernoulli(Box::new(move |v| {
                1.0 - expit(0.5 * ind(v[pcm], 1.0) + v[age] * 0.1 + v[pweight] * 0.1)
            })),
        });
        let dose = nodes.len();
        nodes.push(Node {
            column: ColumnRole::covariate(&format!("dose_{t}"), t, ValueKind::Categorical),
            dist: NodeDist::Multinomial(vec![
                Box::new(move |v| {
                    expit(4.0 + v[pdose] * 0.5 + v[weight].max(0.0).sqrt() * 4.0 - v[age] * 10.0)
                }),
                Box::new(move |v| {
                    expit(-8.0 + v[pdose] * 0.5 + v[weight].max(0.0).sqrt() * 8.568 - v[age] * 9.06)
                }),
                Box::new(move |v| {
                    expit(
                        20.0 + v[pdose] * 0.5 + v[weight].max(0.0).sqrt() * 6.562
                            - v[age] * 18.325,
                    )
                }),
                Box::new(move |v| {
                    let p1 = expit(
                        4.0 + v[pdose] * 0.5 + v[weight].max(0.0).sqrt() * 4.0 - v[age] * 10.0,
                    );
                    let p2 = expit(
                        -8.0 + v[pdose] * 0.5 + v[weight].max(0.0).sqrt() * 8.568 - v[age] * 9.06,
                    );
                    let p3 = expit(
                        20.0 + v[pdose] * 0.5 + v[weight].max(0.0).sqrt() * 6.562
                            - v[age] * 18.325,
                    );
                    1.0 - (p1 + p2 + p3)
                }),
            ]),
        });
        let efv = nodes.len();
        nodes.push(Node {
            column: ColumnRole::treatment(&format!("efv_{t}"), t),
            dist: NodeDist::TruncNormal(
                TruncSpec::new(0.2032, 0.2032, 0.88, 21.84, 8.37, 21.84),
                Box::new(move |v| {
                    0.1 * v[dose]
                        + 0.1 * v[mems]
                        + ind_le(v[genotype], 2.0) * 2.66
                        + ind(v[genotype], 3.0) * 4.6
                }),
                4.06,
            ),
        });
        nodes.push(Node {
            column: ColumnRole::outcome(&format!("vl_{t}"), t, ValueKind::Binary),
            dist: NodeDist::Bernoulli(Box::new(move |v| {
                let i1 = if t == 1 { 1.0 } else { 0.0 };
                let i3 = if t == 3 { 1.0 } else { 0.0 };
                let i4 = if t == 4 { 1.0 } else { 0.0 };
                1.0 - expit(
                    1.0 - 0.6 * i1 - 1.2 * i4
                        + 0.1 * v[pcm]
                        + (2.0 - 0.2 * i3) * v[efv].max(0.0).sqrt(),
                )
            })),
        });
        idx_mems.push(mems);
        idx_weight.push(weight);
        idx_cm.push(cm);
        idx_dose.push(dose);
    }
    StructuralEquationSystem { nodes }
}

fn ind(v: f64, level: f64) -> f64 {
    if v == level {
        1.0
    } else {
        0.0
    }
}

fn ind_gt(v: f64, cut: f64) -> f64 {
    if v > cut {
        1.0
    } else {
        0.0
    }
}

fn ind_le(v: f64, cut: f64) -> f64 {
    if v <= cut {
        1.0
    } else {
        0.0
    }
}

const TAG_SIM: u64 = 0xd6;

fn sample_rows(
    system: &StructuralEquationSystem,
    schema: &[ColumnRole],
    n: usize,
    seed: u64,
    intervention: &Intervention,
) -> Vec<Vec<f64>> {
    let m = schema.len();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, TAG_SIM));
    let mut rows = Vec::with_capacity(n);
    let mut record = vec![0.0; m];
    for _ in 0..n {
        system.sample_record(&mut rng, intervention, &mut record);
        let mut row = record.clone();
        // monotone censoring: blank out everything after the first C = 1
        let mut censored = false;
        for (j, col) in schema.iter().enumerate() {
            if censored {
                row[j] = f64::NAN;
            } else if col.role == Role::Censoring && row[j] == 1.0 {
                censored = true;
            }
        }
        rows.push(row);
    }
    rows
}

/// Draw an observational dataset. Censored systems mark every value after
/// the first censoring indicator equal to one as missing (monotone
/// censoring).
pub fn simulate(id: SystemId, n: usize, seed: u64) -> Result<LongitudinalDataset> {
    if n < 1 {
        return Err(Error::Args("simulate needs n >= 1".into()));
    }
    let system = id.build();
    let schema = system.schema();
    let rows = sample_rows(&system, &schema, n, seed, &Intervention::Observational);
    LongitudinalDataset::from_rows(&schema, &rows)
}

/// Observational sampling routed through the forcing machinery (each
/// treatment forced to its own natural draw); must reproduce the
/// observational law.
pub fn simulate_natural_forced(id: SystemId, n: usize, seed: u64) -> Result<LongitudinalDataset> {
    let system = id.build();
    let schema = system.schema();
    let rows = sample_rows(&system, &schema, n, seed, &Intervention::Natural);
    LongitudinalDataset::from_rows(&schema, &rows)
}

/// Sample under forced treatments (and no censoring), streaming per-time
/// outcome means. For survival systems the event is carried forward, so
/// the truth is the cumulative event probability.
pub fn counterfactual_truth(
    id: SystemId,
    grid: &InterventionGrid,
    n_mc: usize,
    seed: u64,
) -> Result<CurveEstimate> {
    let system = id.build();
    let schema = system.schema();
    let t_max = id.t_max();
    if grid.horizon() != t_max + 1 {
        return Err(Error::Args(format!(
            "grid covers {} time points but {} has {}",
            grid.horizon(),
            id,
            t_max + 1
        )));
    }
    let outcome_idx: Vec<usize> = (0..=t_max)
        .map(|t| {
            schema
                .iter()
                .position(|c| c.role == Role::Outcome && c.time_index == Some(t))
                .expect("outcome per time")
        })
        .collect();
    let absorbing = id.is_survival();

    let values: Vec<Vec<f64>> = (0..grid.n_trajectories())
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed_n(seed, &[TAG_SIM, 1, j as u64]));
            let trajectory = grid.trajectory(j);
            let intervention = Intervention::Forced { trajectory };
            let mut sums = vec![0.0_f64; t_max + 1];
            let mut record = vec![0.0; schema.len()];
            for _ in 0..n_mc {
                system.sample_record(&mut rng, &intervention, &mut record);
                let mut seen = 0.0_f64;
                for (t, &oi) in outcome_idx.iter().enumerate() {
                    let y = if absorbing {
                        seen = seen.max(record[oi]);
                        seen
                    } else {
                        record[oi]
                    };
                    sums[t] += y;
                }
            }
            sums.iter().map(|s| s / n_mc as f64).collect()
        })
        .collect();

    Ok(CurveEstimate {
        estimand: EstimandKind::CdrcSequential,
        c: None,
        labels: (0..grid.n_trajectories()).map(|j| grid.label(j).to_string()).collect(),
        undefined: vec![vec![false; t_max + 1]; grid.n_trajectories()],
        values,
        meta: EstimateMeta { n: n_mc, seed, learners: "counterfactual_truth(monte_carlo)".into() },
    })
}

/// One estimator entry in an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentEstimator {
    pub name: String,
    pub config: EstimatorConfig,
}

/// Experiment definition: replicate `r` times at sample size `n`, compare
/// against brute-force counterfactual truth.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub system: SystemId,
    pub estimators: Vec<ExperimentEstimator>,
    pub grid: InterventionGrid,
    pub r: usize,
    pub n: usize,
    pub seed: u64,
    pub truth_draws: usize,
}

/// Aggregated cell of an experiment report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub estimator: String,
    pub trajectory_label: String,
    pub time: usize,
    pub mean_estimate: f64,
    pub truth: f64,
    pub bias: f64,
    pub empirical_sd: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub system: String,
    pub n: usize,
    pub r: usize,
    pub seed: u64,
    pub cells: Vec<ExperimentCell>,
}

impl ExperimentReport {
    pub fn cell(&self, estimator: &str, label: &str, time: usize) -> Option<&ExperimentCell> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.trajectory_label == label && c.time == time)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "estimator",
            "trajectory_label",
            "time",
            "mean_estimate",
            "truth",
            "bias",
            "empirical_sd",
            "n_ok",
            "n_failed",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.estimator.clone(),
                c.trajectory_label.clone(),
                c.time.to_string(),
                c.mean_estimate.to_string(),
                c.truth.to_string(),
                c.bias.to_string(),
                c.empirical_sd.to_string(),
                c.n_ok.to_string(),
                c.n_failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run the Monte-Carlo experiment: per replicate, draw a fresh dataset and
/// run every estimator; aggregate mean estimate, bias against the truth
/// and the empirical SD. Estimator failures are recorded and excluded.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    if spec.r < 1 {
        return Err(Error::Args("experiment needs R >= 1".into()));
    }
    if spec.estimators.is_empty() {
        return Err(Error::Args("experiment needs at least one estimator".into()));
    }
    let truth = counterfactual_truth(spec.system, &spec.grid, spec.truth_draws, spec.seed)?;
    let absorbing = spec.system.is_survival();

    let replicate_outputs: Vec<Vec<Option<CurveEstimate>>> = (0..spec.r)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = split_seed_n(spec.seed, &[0xe0, rep as u64]);
            let data = match simulate(spec.system, spec.n, rep_seed) {
                Ok(d) => d,
                Err(_) => return vec![None; spec.estimators.len()],
            };
            let data = if absorbing { data.with_absorbing_outcomes() } else { data };
            spec.estimators
                .iter()
                .map(|est| {
                    let mut cfg = est.config.clone();
                    cfg.seed = split_seed(rep_seed, 0xe1);
                    gcomp::estimate(&data, &spec.grid, &cfg).ok()
                })
                .collect()
        })
        .collect();

    let default_times: Vec<usize> = (0..=spec.system.t_max()).collect();

    let mut cells = Vec::new();
    for (ei, est) in spec.estimators.iter().enumerate() {
        let est_times: Vec<usize> = match &est.config.target_times {
            Some(t) => t.clone(),
            None => default_times.clone(),
        };
        for j in 0..spec.grid.n_trajectories() {
            for &t in &est_times {
                let mut vals = Vec::new();
                let mut failed = 0usize;
                for rep in &replicate_outputs {
                    match &rep[ei] {
                        Some(curve) => {
                            let v = curve.value(j, t);
                            if v.is_finite() {
                                vals.push(v);
                            } else {
                                failed += 1;
                            }
                        }
                        None => failed += 1,
                    }
                }
                let n_ok = vals.len();
                let mean =
                    if n_ok > 0 { vals.iter().sum::<f64>() / n_ok as f64 } else { f64::NAN };
                let sd = if n_ok > 1 {
                    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_ok - 1) as f64)
                        .sqrt()
                } else {
                    0.0
                };
                let tr = truth.value(j, t);
                cells.push(ExperimentCell {
                    estimator: est.name.clone(),
                    trajectory_label: spec.grid.label(j).to_string(),
                    time: t,
                    mean_estimate: mean,
                    truth: tr,
                    bias: mean - tr,
                    empirical_sd: sd,
                    n_ok,
                    n_failed: failed,
                });
            }
        }
    }

    Ok(ExperimentReport {
        system: spec.system.to_string(),
        n: spec.n,
        r: spec.r,
        seed: spec.seed,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trunc_normal_tail_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = TruncSpec::new(0.0, 0.0, 1.0, 10.0, 8.0, 10.0);
        // mu far above b: output lands in [b1, b2]
        for _ in 0..200 {
            let x = sample_trunc_normal(&spec, 10.0 + 20.0, 1.0, &mut rng);
            assert!((8.0..=10.0).contains(&x), "{x}");
        }
        // wide truncation: plain normal draw territory
        let spec = TruncSpec::new(-1e6, -1e6, -1e6, 1e6, 1e6, 1e6);
        let xs: Vec<f64> =
            (0..5000).map(|_| sample_trunc_normal(&spec, 2.0, 1.0, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.0).abs() < 0.06, "mean {mean}");
    }

    #[test]
    fn efv0_spec_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = TruncSpec::new(0.2032, 0.2032, 0.88, 21.0, 8.376, 21.0);
        for _ in 0..2000 {
            let x = sample_trunc_normal(&spec, 4.0, 4.06, &mut rng);
            assert!((0.2032..=21.0).contains(&x), "{x}");
        }
    }

    #[test]
    fn sim1_marginals_match_printed_distributions() {
        let n = 10_000;
        let data = simulate(SystemId::Sim1, n, 7).unwrap();
        let l1 = data.column_index("l1_0").unwrap();
        let mean_l1: f64 = (0..n).map(|r| data.value(r, l1)).sum::<f64>() / n as f64;
        assert!((mean_l1 - 0.3).abs() < 0.015, "mean L1_0 = {mean_l1}");

        // regression of A_0 on (L1_0, L2_0) recovers (7, 1, 0.7)
        let l2 = data.column_index("l2_0").unwrap();
        let a0 = data.column_index("a_0").unwrap();
        let mut flat = Vec::with_capacity(n * 3);
        for r in 0..n {
            flat.push(1.0);
            flat.push(data.value(r, l1));
            flat.push(data.value(r, l2));
        }
        let x = crate::linalg::Matrix::from_flat(flat, n, 3);
        let y: Vec<f64> = (0..n).map(|r| data.value(r, a0)).collect();
        let f = crate::learners::fit_ols(&x, &y).unwrap();
        let c = f.coefficients().unwrap();
        assert!((c[0] - 7.0).abs() < 0.05, "intercept {}", c[0]);
        assert!((c[1] - 1.0).abs() < 0.05, "l1 slope {}", c[1]);
        assert!((c[2] - 0.7).abs() < 0.05, "l2 slope {}", c[2]);
    }

    #[test]
    fn sim3_treatment_stays_in_truncation_range() {
        let n = 10_000;
        let data = simulate(SystemId::Sim3, n, 3).unwrap();
        for t in 0..=4 {
            let col = data.treatment_col(t);
            let hi = if t == 0 { 21.0 } else { 21.84 };
            for r in 0..n {
                let v = data.value(r, col);
                assert!(v >= 0.2032 && v <= hi, "efv_{t} = {v}");
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let a = simulate(SystemId::Sim2, 500, 11).unwrap();
        let b = simulate(SystemId::Sim2, 500, 11).unwrap();
        for r in 0..500 {
            for c in 0..a.n_cols() {
                let (va, vb) = (a.value(r, c), b.value(r, c));
                assert!(va.to_bits() == vb.to_bits());
            }
        }
    }

    #[test]
    fn sim1_truth_t0_matches_closed_form() {
        // E(Y_0^a) = -1 + 0.5 a + 0.5 E(L2_0) = 0.5 a - 1.2
        let grid = InterventionGrid::constant(&[2.0, 6.0, 11.0], 2).unwrap();
        let truth = counterfactual_truth(SystemId::Sim1, &grid, 400_000, 5).unwrap();
        for (j, &a) in [2.0, 6.0, 11.0].iter().enumerate() {
            let expect = 0.5 * a - 1.2;
            let got = truth.value(j, 0);
            assert!((got - expect).abs() < 0.01, "a={a}: {got} vs {expect}");
        }
    }

    #[test]
    fn equal_interventions_give_equal_truth() {
        let grid = InterventionGrid::constant(&[4.0, 4.000001], 2).unwrap();
        let truth = counterfactual_truth(SystemId::Sim1, &grid, 50_000, 5).unwrap();
        for t in 0..=2 {
            let d = (truth.value(0, t) - truth.value(1, t)).abs();
            assert!(d < 0.03, "t={t}: {d}");
        }
    }

    #[test]
    fn sim2_truth_monotone_in_a_at_final_time() {
        let grid = InterventionGrid::constant(&[-7.0, -2.0, 3.0, 8.0, 13.0], 4).unwrap();
        let truth = counterfactual_truth(SystemId::Sim2, &grid, 200_000, 9).unwrap();
        let t = 4;
        for j in 1..5 {
            assert!(
                truth.value(j, t) >= truth.value(j - 1, t) - 0.005,
                "not monotone at j={j}: {} < {}",
                truth.value(j, t),
                truth.value(j - 1, t)
            );
        }
    }

    #[test]
    fn natural_forcing_reproduces_observational_means() {
        let n = 20_000;
        let a = simulate(SystemId::Sim1, n, 13).unwrap();
        let b = simulate_natural_forced(SystemId::Sim1, n, 13).unwrap();
        for c in 0..a.n_cols() {
            let ma: f64 = (0..n).map(|r| a.value(r, c)).sum::<f64>() / n as f64;
            let mb: f64 = (0..n).map(|r| b.value(r, c)).sum::<f64>() / n as f64;
            assert!((ma - mb).abs() < 1e-12, "col {c}: {ma} vs {mb}");
        }
    }

    #[test]
    fn node_means_match_large_sample_reference() {
        // per-node means at n = 20k vs an n = 10^6 reference, within 4
        // Monte-Carlo standard errors (computed from the small sample)
        for id in [SystemId::Sim1, SystemId::Sim2, SystemId::Sim3] {
            let small = simulate(id, 20_000, 101).unwrap();
            let big = simulate(id, 1_000_000, 999).unwrap();
            for c in 0..small.n_cols() {
                let vals: Vec<f64> = (0..small.n_rows())
                    .map(|r| small.value(r, c))
                    .filter(|v| !v.is_nan())
                    .collect();
                let refs: Vec<f64> = (0..big.n_rows())
                    .map(|r| big.value(r, c))
                    .filter(|v| !v.is_nan())
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let mr = refs.iter().sum::<f64>() / refs.len() as f64;
                let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                    / (vals.len() - 1) as f64)
                    .sqrt();
                let se = sd / (vals.len() as f64).sqrt();
                assert!((m - mr).abs() <= 4.0 * se + 1e-9, "{id} col {c}: {m} vs {mr} (se {se})");
            }
        }
    }

    #[test]
    fn experiment_single_replicate_equals_single_run() {
        let grid = InterventionGrid::constant(&[5.0, 7.0], 2).unwrap();
        let mut cfg = EstimatorConfig::sequential(0);
        cfg.stack = crate::gcomp::LearnerStackSpec::single(crate::learners::LearnerKind::Ols);
        cfg.target_times = Some(vec![2]);
        let spec = ExperimentSpec {
            system: SystemId::Sim1,
            estimators: vec![ExperimentEstimator { name: "seq".into(), config: cfg.clone() }],
            grid: grid.clone(),
            r: 1,
            n: 2000,
            seed: 77,
            truth_draws: 50_000,
        };
        let report = run_experiment(&spec).unwrap();
        // reproduce the single replicate by hand
        let rep_seed = split_seed_n(77, &[0xe0, 0]);
        let data = simulate(SystemId::Sim1, 2000, rep_seed).unwrap();
        let mut cfg2 = cfg;
        cfg2.seed = split_seed(rep_seed, 0xe1);
        let est = gcomp::estimate(&data, &grid, &cfg2).unwrap();
        let cell = report.cell("seq", "5", 2).unwrap();
        assert!((cell.mean_estimate - est.value(0, 2)).abs() < 1e-12);
        assert_eq!(cell.n_ok, 1);
    }
}

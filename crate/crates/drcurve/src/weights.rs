//! Positivity-aware weight functions built from evaluated treatment
//! densities: the truncation constant c, the simple variant (unit weight
//! in good support, density ratio otherwise) and the fallback variant
//! that walks the denominator chain toward the marginal density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which weight function to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    /// Unit weight when the numerator clears c, otherwise the immediate
    /// density ratio.
    Simple,
    /// Like `Simple`, but the denominator falls back to earlier
    /// conditioning sets (and ultimately the marginal) until one clears c.
    Fallback,
}

/// Truncation plan shared by all weight computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPlan {
    pub c: f64,
    pub variant: WeightVariant,
    /// Replaces a vanishing denominator; floored divisions are flagged.
    pub denominator_floor: f64,
    /// Use the ratio test num/den > c for "good support" instead of the
    /// numerator test num > c.
    pub ratio_support_test: bool,
}

impl WeightPlan {
    pub fn new(c: f64, variant: WeightVariant) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Config(format!("truncation constant must be positive, got {c}")));
        }
        Ok(WeightPlan { c, variant, denominator_floor: 1e-12, ratio_support_test: false })
    }

    pub fn simple(c: f64) -> Result<Self> {
        Self::new(c, WeightVariant::Simple)
    }

    pub fn fallback(c: f64) -> Result<Self> {
        Self::new(c, WeightVariant::Fallback)
    }
}

/// Which rule produced a weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBranch {
    /// Numerator cleared c: weight is exactly one.
    UnitWeight,
    /// Ratio against the immediate denominator.
    Ratio { floored: bool },
    /// Ratio against the k-th fallback denominator (k >= 1).
    FallbackLevel(usize),
    /// Ratio against the marginal density.
    MarginalRatio { floored: bool },
    /// t = 0 rule: the marginal itself failed the threshold, so the
    /// estimand is undefined for this trajectory.
    Undefined,
}

impl WeightBranch {
    pub fn is_unit(&self) -> bool {
        matches!(self, WeightBranch::UnitWeight)
    }

    pub fn label(&self) -> String {
        match self {
            WeightBranch::UnitWeight => "unit_weight".into(),
            WeightBranch::Ratio { floored: false } => "ratio".into(),
            WeightBranch::Ratio { floored: true } => "ratio_floored".into(),
            WeightBranch::FallbackLevel(k) => format!("fallback_level({k})"),
            WeightBranch::MarginalRatio { floored: false } => "marginal_ratio".into(),
            WeightBranch::MarginalRatio { floored: true } => "marginal_ratio_floored".into(),
            WeightBranch::Undefined => "undefined".into(),
        }
    }
}

/// One computed weight with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub unit: usize,
    pub time: usize,
    pub weight: f64,
    pub branch: WeightBranch,
    pub numerator: f64,
    pub denominator: f64,
}

impl WeightRecord {
    pub fn at(mut self, unit: usize, time: usize) -> Self {
        self.unit = unit;
        self.time = time;
        self
    }
}

/// The ad-hoc default truncation constant 5 / (sqrt(n) * ln(n/5)).
pub fn default_c(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Args("default_c needs n >= 2".into()));
    }
    let ratio = n as f64 / 5.0;
    if ratio <= 1.0 {
        return Err(Error::Args(format!(
            "default_c undefined for n = {n}: ln(n/5) is nonpositive"
        )));
    }
    Ok(5.0 / ((n as f64).sqrt() * ratio.ln()))
}

fn in_good_support(num: f64, first_den: f64, plan: &WeightPlan) -> bool {
    if plan.ratio_support_test {
        num / first_den.max(plan.denominator_floor) > plan.c
    } else {
        num > plan.c
    }
}

/// Simple weight: 1 when the numerator clears c, otherwise the floored
/// ratio against the immediate denominator.
pub fn weight_simple(num: f64, den: f64, plan: &WeightPlan) -> WeightRecord {
    debug_assert!(num >= 0.0 && den >= 0.0);
    if in_good_support(num, den, plan) {
        return WeightRecord {
            unit: 0,
            time: 0,
            weight: 1.0,
            branch: WeightBranch::UnitWeight,
            numerator: num,
            denominator: den,
        };
    }
    let floored = den < plan.denominator_floor;
    WeightRecord {
        unit: 0,
        time: 0,
        weight: num / den.max(plan.denominator_floor),
        branch: WeightBranch::Ratio { floored },
        numerator: num,
        denominator: den,
    }
}

/// Fallback weight: the denominator chain is ordered from the immediate
/// conditioning set down to the marginal density (last element). The
/// first chain element clearing c becomes the denominator; if none does,
/// the marginal is used.
pub fn weight_fallback(num: f64, den_chain: &[f64], plan: &WeightPlan) -> WeightRecord {
    assert!(!den_chain.is_empty(), "denominator chain must at least hold the marginal");
    if in_good_support(num, den_chain[0], plan) {
        return WeightRecord {
            unit: 0,
            time: 0,
            weight: 1.0,
            branch: WeightBranch::UnitWeight,
            numerator: num,
            denominator: den_chain[0],
        };
    }
    let marginal = *den_chain.last().unwrap();
    for (k, &den) in den_chain.iter().enumerate().take(den_chain.len() - 1) {
        if den > plan.c {
            let branch = if k == 0 {
                WeightBranch::Ratio { floored: false }
            } else {
                WeightBranch::FallbackLevel(k)
            };
            return WeightRecord {
                unit: 0,
                time: 0,
                weight: num / den,
                branch,
                numerator: num,
                denominator: den,
            };
        }
    }
    let floored = marginal < plan.denominator_floor;
    WeightRecord {
        unit: 0,
        time: 0,
        weight: num / marginal.max(plan.denominator_floor),
        branch: WeightBranch::MarginalRatio { floored },
        numerator: num,
        denominator: marginal,
    }
}

/// t = 0 weight against the marginal density. When the marginal fails the
/// threshold the estimand is undefined for the trajectory; the weight is
/// still computed (floored) so a value can be reported alongside the flag.
pub fn single_timepoint_weight(num: f64, marginal: f64, plan: &WeightPlan) -> WeightRecord {
    if marginal <= plan.c {
        let raw = if in_good_support(num, marginal, plan) {
            1.0
        } else {
            num / marginal.max(plan.denominator_floor)
        };
        return WeightRecord {
            unit: 0,
            time: 0,
            weight: raw,
            branch: WeightBranch::Undefined,
            numerator: num,
            denominator: marginal,
        };
    }
    if in_good_support(num, marginal, plan) {
        return WeightRecord {
            unit: 0,
            time: 0,
            weight: 1.0,
            branch: WeightBranch::UnitWeight,
            numerator: num,
            denominator: marginal,
        };
    }
    let floored = marginal < plan.denominator_floor;
    WeightRecord {
        unit: 0,
        time: 0,
        weight: num / marginal.max(plan.denominator_floor),
        branch: WeightBranch::MarginalRatio { floored },
        numerator: num,
        denominator: marginal,
    }
}

/// A weight record tagged with the trajectory it belongs to, plus the c
/// in force; this is the exportable audit row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWeightRecord {
    pub trajectory: usize,
    pub trajectory_label: String,
    pub c: f64,
    #[serde(flatten)]
    pub record: WeightRecord,
}

/// CSV export: unit, t, trajectory, c, weight, branch, num, den.
pub fn write_weight_records_csv<W: std::io::Write>(
    records: &[TrajectoryWeightRecord],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unit", "t", "trajectory", "c", "weight", "branch", "num", "den"])?;
    for r in records {
        w.write_record([
            r.record.unit.to_string(),
            r.record.time.to_string(),
            r.trajectory_label.clone(),
            r.c.to_string(),
            r.record.weight.to_string(),
            r.record.branch.label(),
            r.record.numerator.to_string(),
            r.record.denominator.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

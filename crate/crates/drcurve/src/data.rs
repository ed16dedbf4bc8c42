//! Longitudinal data containers, temporal-ordering metadata and
//! intervention grids.
//!
//! Data is wide format: one row per unit, one column per variable per
//! time point. The temporal order within a time point is
//! `L_t -> A_t -> (C_t) -> Y_t`, and `Y_{t-1}` precedes `L_t`. All
//! estimators consume [`LongitudinalDataset`] read-only, so a dataset can
//! be shared freely across parallel workers once loaded.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a column means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    BaselineCovariate,
    TimeCovariate,
    Treatment,
    Outcome,
    Censoring,
}

/// How a column's values behave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Continuous,
    Binary,
    Categorical,
}

/// Declared role of one column. Baseline covariates carry no time index;
/// every other role must have one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRole {
    pub name: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_index: Option<usize>,
    pub value_kind: ValueKind,
}

impl ColumnRole {
    pub fn new(name: &str, role: Role, time_index: Option<usize>, value_kind: ValueKind) -> Self {
        ColumnRole { name: name.to_string(), role, time_index, value_kind }
    }

    pub fn baseline(name: &str, kind: ValueKind) -> Self {
        Self::new(name, Role::BaselineCovariate, None, kind)
    }

    pub fn covariate(name: &str, t: usize, kind: ValueKind) -> Self {
        Self::new(name, Role::TimeCovariate, Some(t), kind)
    }

    pub fn treatment(name: &str, t: usize) -> Self {
        Self::new(name, Role::Treatment, Some(t), ValueKind::Continuous)
    }

    pub fn outcome(name: &str, t: usize, kind: ValueKind) -> Self {
        Self::new(name, Role::Outcome, Some(t), kind)
    }

    pub fn censoring(name: &str, t: usize) -> Self {
        Self::new(name, Role::Censoring, Some(t), ValueKind::Binary)
    }
}

/// Wide-format longitudinal dataset with validated temporal ordering.
///
/// Cells are `f64`; missing values are stored as NaN and are only legal
/// after a censoring indicator equal to one. Categorical levels are
/// enumerated at load in order of first appearance (row order), which
/// fixes the reference level for one-hot expansion.
#[derive(Debug, Clone)]
pub struct LongitudinalDataset {
    columns: Vec<ColumnRole>,
    /// Row-major cells, `n_rows x columns.len()`, in temporal order.
    cells: Vec<f64>,
    n_rows: usize,
    t_max: usize,
    categorical_levels: HashMap<usize, Vec<f64>>,
}

fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// Sort key implementing the temporal order. Within a time point the
/// order is covariates, treatment, censoring, outcome; within a group the
/// declared order is kept.
fn temporal_rank(c: &ColumnRole) -> (usize, usize) {
    match c.role {
        Role::BaselineCovariate => (0, 0),
        // time block at t occupies ranks starting at 1 + 4t
        Role::TimeCovariate => (1 + 4 * c.time_index.unwrap_or(0), 0),
        Role::Treatment => (2 + 4 * c.time_index.unwrap_or(0), 0),
        Role::Censoring => (3 + 4 * c.time_index.unwrap_or(0), 0),
        Role::Outcome => (4 + 4 * c.time_index.unwrap_or(0), 0),
    }
}

impl LongitudinalDataset {
    /// Build a dataset from rows given in schema order (not necessarily
    /// temporal order). Validates all invariants.
    pub fn from_rows(schema: &[ColumnRole], rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Parse("dataset has no rows".into()));
        }
        let t_max = validate_schema(schema)?;

        // reorder columns into temporal order, stably
        let mut order: Vec<usize> = (0..schema.len()).collect();
        order.sort_by_key(|&i| (temporal_rank(&schema[i]), i));
        let columns: Vec<ColumnRole> = order.iter().map(|&i| schema[i].clone()).collect();

        let m = columns.len();
        let mut cells = Vec::with_capacity(rows.len() * m);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} cells, schema declares {}",
                    r,
                    row.len(),
                    schema.len()
                )));
            }
            for &i in &order {
                cells.push(row[i]);
            }
        }

        let mut ds = LongitudinalDataset {
            columns,
            cells,
            n_rows: rows.len(),
            t_max,
            categorical_levels: HashMap::new(),
        };
        ds.validate_cells()?;
        ds.enumerate_levels();
        Ok(ds)
    }

    /// Missingness rule: within a row, every cell must be present until a
    /// censoring indicator equal to 1 is passed (in temporal order);
    /// everything after that point may be missing.
    fn validate_cells(&self) -> Result<()> {
        for r in 0..self.n_rows {
            let mut censored = false;
            for (j, col) in self.columns.iter().enumerate() {
                let v = self.cells[r * self.columns.len() + j];
                if censored {
                    continue;
                }
                if is_missing(v) {
                    return Err(Error::Parse(format!(
                        "row {}: missing value in column '{}' before any censoring event",
                        r, col.name
                    )));
                }
                if col.value_kind == ValueKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::Parse(format!(
                        "row {}: binary column '{}' holds {}",
                        r, col.name, v
                    )));
                }
                if col.role == Role::Censoring && v == 1.0 {
                    censored = true;
                }
            }
        }
        Ok(())
    }

    fn enumerate_levels(&mut self) {
        let m = self.columns.len();
        for (j, col) in self.columns.iter().enumerate() {
            if col.value_kind != ValueKind::Categorical {
                continue;
            }
            let mut levels: Vec<f64> = Vec::new();
            for r in 0..self.n_rows {
                let v = self.cells[r * m + j];
                if !is_missing(v) && !levels.contains(&v) {
                    levels.push(v);
                }
            }
            self.categorical_levels.insert(j, levels);
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Largest time index T; time points are 0..=T.
    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn columns(&self) -> &[ColumnRole] {
        &self.columns
    }

    /// Column names in temporal order.
    pub fn ordering(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.columns.len() + col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_values(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.value(r, col)).collect()
    }

    /// Observed levels (order of first appearance) for a categorical column.
    pub fn levels(&self, col: usize) -> Option<&[f64]> {
        self.categorical_levels.get(&col).map(|v| v.as_slice())
    }

    pub fn treatment_col(&self, t: usize) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == Role::Treatment && c.time_index == Some(t))
            .expect("validated schema has a treatment column per time index")
    }

    pub fn outcome_col(&self, t: usize) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == Role::Outcome && c.time_index == Some(t))
            .expect("validated schema has an outcome column per time index")
    }

    pub fn censoring_col(&self, t: usize) -> Option<usize> {
        self.columns.iter().position(|c| c.role == Role::Censoring && c.time_index == Some(t))
    }

    pub fn has_censoring(&self) -> bool {
        self.columns.iter().any(|c| c.role == Role::Censoring)
    }

    /// Indices of every column strictly before `A_t` in temporal order
    /// (the history `H_t`).
    pub fn history_cols(&self, t: usize) -> Vec<usize> {
        let a = self.treatment_col(t);
        (0..a).collect()
    }

    /// Indices of every column strictly before `A_t`, dropping columns that
    /// come after `A_s` for `s < t` (history up to and including `A_s`).
    pub fn history_through_treatment(&self, s: usize) -> Vec<usize> {
        let a = self.treatment_col(s);
        (0..=a).collect()
    }

    /// All treatment column indices by time.
    pub fn treatment_cols(&self) -> Vec<usize> {
        (0..=self.t_max).map(|t| self.treatment_col(t)).collect()
    }

    /// True if any cell of the row is missing.
    pub fn row_has_missing(&self, row: usize) -> bool {
        let m = self.columns.len();
        self.cells[row * m..(row + 1) * m].iter().any(|v| is_missing(*v))
    }

    /// Resample rows with replacement (unit-level bootstrap).
    pub fn resample(&self, indices: &[usize]) -> LongitudinalDataset {
        let m = self.columns.len();
        let mut cells = Vec::with_capacity(indices.len() * m);
        for &r in indices {
            cells.extend_from_slice(&self.cells[r * m..(r + 1) * m]);
        }
        let mut ds = LongitudinalDataset {
            columns: self.columns.clone(),
            cells,
            n_rows: indices.len(),
            t_max: self.t_max,
            categorical_levels: HashMap::new(),
        };
        ds.enumerate_levels();
        ds
    }

    /// Return a copy with the outcome columns replaced by their running
    /// maximum (events carried forward once observed).
    pub fn with_absorbing_outcomes(&self) -> LongitudinalDataset {
        let mut ds = self.clone();
        let m = ds.columns.len();
        let outcome_cols: Vec<usize> = (0..=ds.t_max).map(|t| ds.outcome_col(t)).collect();
        for r in 0..ds.n_rows {
            let mut seen = 0.0_f64;
            for &j in &outcome_cols {
                let v = ds.cells[r * m + j];
                if is_missing(v) {
                    continue;
                }
                seen = seen.max(v);
                ds.cells[r * m + j] = seen;
            }
        }
        ds
    }

    /// Write CSV (temporal column order) next to a JSON schema sidecar.
    pub fn save(&self, csv_path: &Path, schema_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        let m = self.columns.len();
        let mut buf = String::new();
        for r in 0..self.n_rows {
            let rec: Vec<String> = (0..m)
                .map(|j| {
                    let v = self.cells[r * m + j];
                    if is_missing(v) {
                        String::new()
                    } else {
                        buf.clear();
                        let _ = write!(buf, "{}", v);
                        buf.clone()
                    }
                })
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        let schema_json = serde_json::to_string_pretty(&self.columns)?;
        std::fs::write(schema_path, schema_json + "\n")?;
        Ok(())
    }
}

/// Validate schema invariants; returns T.
fn validate_schema(schema: &[ColumnRole]) -> Result<usize> {
    if schema.is_empty() {
        return Err(Error::Schema("schema declares no columns".into()));
    }
    let mut names = std::collections::HashSet::new();
    for c in schema {
        if !names.insert(c.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
        }
        match c.role {
            Role::BaselineCovariate => {
                if c.time_index.is_some() {
                    return Err(Error::Schema(format!(
                        "baseline covariate '{}' must not carry a time index",
                        c.name
                    )));
                }
            }
            _ => {
                if c.time_index.is_none() {
                    return Err(Error::Schema(format!(
                        "column '{}' with role {:?} needs a time index",
                        c.name, c.role
                    )));
                }
            }
        }
    }

    let times_of = |role: Role| -> Vec<usize> {
        schema.iter().filter(|c| c.role == role).filter_map(|c| c.time_index).collect()
    };
    let treat_times = times_of(Role::Treatment);
    let outcome_times = times_of(Role::Outcome);
    if treat_times.is_empty() {
        return Err(Error::Schema("no treatment column declared".into()));
    }
    let t_max = *treat_times.iter().max().unwrap();

    for t in 0..=t_max {
        let n_treat = treat_times.iter().filter(|&&u| u == t).count();
        let n_out = outcome_times.iter().filter(|&&u| u == t).count();
        if n_treat != 1 {
            return Err(Error::Schema(format!(
                "time {} declares {} treatment columns, expected exactly 1",
                t, n_treat
            )));
        }
        if n_out != 1 {
            return Err(Error::Schema(format!(
                "time {} declares {} outcome columns, expected exactly 1",
                t, n_out
            )));
        }
    }
    if outcome_times.iter().any(|&u| u > t_max) {
        return Err(Error::Schema("outcome column beyond the last treatment time".into()));
    }
    for c in schema {
        if let Some(u) = c.time_index {
            if u > t_max {
                return Err(Error::Schema(format!(
                    "column '{}' has time index {} beyond T={} (non-contiguous range)",
                    c.name, u, t_max
                )));
            }
        }
    }

    // censoring, when present, exists at every time from its first appearance
    let cens_times = times_of(Role::Censoring);
    if let Some(&first) = cens_times.iter().min() {
        for t in first..=t_max {
            if !cens_times.contains(&t) {
                return Err(Error::Schema(format!(
                    "censoring declared at time {} but missing at time {}",
                    first, t
                )));
            }
        }
    }
    Ok(t_max)
}

/// Read the JSON schema sidecar.
pub fn load_schema(path: &Path) -> Result<Vec<ColumnRole>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read schema {}: {}", path.display(), e)))?;
    let schema: Vec<ColumnRole> = serde_json::from_str(&text)?;
    Ok(schema)
}

/// Load a CSV with header row against a declared schema.
///
/// Cells must be decimal-point numerics; empty, `NA` and `NaN` cells are
/// missing. Columns not named in the schema are ignored.
pub fn load_dataset(path: &Path, schema: &[ColumnRole]) -> Result<LongitudinalDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Parse("empty file".into()));
    }
    let mut positions = Vec::with_capacity(schema.len());
    for col in schema {
        match headers.iter().position(|h| h == col.name) {
            Some(p) => positions.push(p),
            None => {
                return Err(Error::Schema(format!("column '{}' not found in header", col.name)))
            }
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(schema.len());
        for (k, &p) in positions.iter().enumerate() {
            let raw = record.get(p).unwrap_or("").trim();
            let v = if raw.is_empty() || raw == "NA" || raw == "NaN" {
                f64::NAN
            } else {
                raw.parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "row {}: cannot parse '{}' in column '{}'",
                        r, raw, schema[k].name
                    ))
                })?
            };
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty file".into()));
    }
    LongitudinalDataset::from_rows(schema, &rows)
}

/// A set of intervention trajectories to evaluate, each of length T+1.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionGrid {
    trajectories: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl InterventionGrid {
    pub fn new(trajectories: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::Args("intervention grid needs at least one trajectory".into()));
        }
        let len = trajectories[0].len();
        if len == 0 {
            return Err(Error::Args("trajectories must cover at least one time point".into()));
        }
        for tr in &trajectories {
            if tr.len() != len {
                return Err(Error::Args("all trajectories must have identical length".into()));
            }
        }
        for i in 0..trajectories.len() {
            for j in (i + 1)..trajectories.len() {
                if trajectories[i] == trajectories[j] {
                    return Err(Error::Args(format!(
                        "duplicate trajectory at positions {} and {}",
                        i, j
                    )));
                }
            }
        }
        let labels = match labels {
            Some(l) => {
                if l.len() != trajectories.len() {
                    return Err(Error::Args("labels must match trajectory count".into()));
                }
                l
            }
            None => trajectories.iter().map(|tr| default_label(tr)).collect(),
        };
        Ok(InterventionGrid { trajectories, labels })
    }

    /// One trajectory per value, constant over T+1 time points.
    pub fn constant(values: &[f64], t_max: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Args("constant grid needs at least one value".into()));
        }
        let trajectories: Vec<Vec<f64>> = values.iter().map(|&v| vec![v; t_max + 1]).collect();
        Self::new(trajectories, None)
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    /// Number of time points each trajectory covers (T+1).
    pub fn horizon(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn trajectory(&self, j: usize) -> &[f64] {
        &self.trajectories[j]
    }

    pub fn label(&self, j: usize) -> &str {
        &self.labels[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &str)> {
        self.trajectories.iter().map(|t| t.as_slice()).zip(self.labels.iter().map(|l| l.as_str()))
    }
}

fn default_label(tr: &[f64]) -> String {
    let constant = tr.windows(2).all(|w| w[0] == w[1]);
    if constant {
        format!("{}", tr[0])
    } else {
        tr.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
    }
}

/// Which estimand a curve reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandKind {
    CdrcSequential,
    CdrcParametric,
    Weighted,
}

impl std::fmt::Display for EstimandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimandKind::CdrcSequential => write!(f, "cdrc_sequential"),
            EstimandKind::CdrcParametric => write!(f, "cdrc_parametric"),
            EstimandKind::Weighted => write!(f, "weighted"),
        }
    }
}

/// Descriptive metadata attached to an estimate.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct EstimateMeta {
    pub n: usize,
    pub seed: u64,
    pub learners: String,
}

/// Estimand value per (trajectory, time point), with undefined flags per
/// cell and the metadata needed to reproduce the run.
#[derive(Debug, Clone)]
pub struct CurveEstimate {
    pub estimand: EstimandKind,
    pub c: Option<f64>,
    pub labels: Vec<String>,
    /// `values[j][t]` for trajectory j, target time t.
    pub values: Vec<Vec<f64>>,
    pub undefined: Vec<Vec<bool>>,
    pub meta: EstimateMeta,
}

impl CurveEstimate {
    pub fn value(&self, trajectory: usize, time: usize) -> f64 {
        self.values[trajectory][time]
    }

    pub fn is_undefined(&self, trajectory: usize, time: usize) -> bool {
        self.undefined[trajectory][time]
    }

    pub fn n_trajectories(&self) -> usize {
        self.values.len()
    }

    pub fn n_times(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn any_undefined(&self) -> bool {
        self.undefined.iter().any(|row| row.iter().any(|&u| u))
    }

    /// CSV rows: trajectory_label, time, estimand, c, value, undefined_flag.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trajectory_label", "time", "estimand", "c", "value", "undefined_flag"])?;
        let c_str = self.c.map(|c| c.to_string()).unwrap_or_default();
        for (j, label) in self.labels.iter().enumerate() {
            for t in 0..self.values[j].len() {
                // cells never computed (target-time subsets) are skipped
                if self.values[j][t].is_nan() && !self.undefined[j][t] {
                    continue;
                }
                w.write_record([
                    label.as_str(),
                    &t.to_string(),
                    &self.estimand.to_string(),
                    &c_str,
                    &self.values[j][t].to_string(),
                    if self.undefined[j][t] { "1" } else { "0" },
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

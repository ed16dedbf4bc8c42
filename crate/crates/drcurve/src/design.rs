//! Model-matrix construction from dataset columns: one-hot expansion of
//! categoricals (reference level = first observed), optional basis
//! expansion, constant-column dropping, and row materialization with
//! value overrides (for plugging intervened treatments into histories).

use serde::{Deserialize, Serialize};

use crate::data::{LongitudinalDataset, ValueKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Basis expansion applied on top of the (one-hot expanded) base columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    Linear,
    /// Powers 2..=degree of numeric base columns.
    Polynomial { degree: u32 },
    /// Products of up to `order` distinct expanded columns (order 2 gives
    /// pairwise interactions; higher orders saturate discrete designs).
    Interactions { order: usize },
}

impl Default for Expansion {
    fn default() -> Self {
        Expansion::Linear
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Term {
    Intercept,
    Slot(usize),
    Power(usize, u32),
    Product(Vec<usize>),
}

/// Where an expanded slot comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Slot {
    dataset_col: usize,
    /// For one-hot slots, the level this slot indicates.
    level: Option<f64>,
    name: String,
}

/// Frozen design: maps dataset rows to model-matrix rows, identically at
/// fit and prediction time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignInfo {
    slots: Vec<Slot>,
    terms: Vec<Term>,
    pub names: Vec<String>,
    /// Index (into terms) of the linear term of the treatment column, when
    /// one was declared.
    pub treatment_term: Option<usize>,
    /// Term takes only values 0/1 over the fit rows.
    pub binary_term: Vec<bool>,
}

const MAX_TERMS: usize = 20_000;

impl DesignInfo {
    /// Freeze a design over `rows` of `data` for the given dataset columns.
    /// Constant terms (other than the intercept) are dropped.
    pub fn fit(
        data: &LongitudinalDataset,
        rows: &[usize],
        base_cols: &[usize],
        expansion: Expansion,
        treatment_col: Option<usize>,
    ) -> Result<DesignInfo> {
        let mut slots = Vec::new();
        for &c in base_cols {
            let col = &data.columns()[c];
            if col.value_kind == ValueKind::Categorical {
                let levels = data.levels(c).unwrap_or(&[]);
                for &lvl in levels.iter().skip(1) {
                    slots.push(Slot {
                        dataset_col: c,
                        level: Some(lvl),
                        name: format!("{}=={}", col.name, lvl),
                    });
                }
            } else {
                slots.push(Slot { dataset_col: c, level: None, name: col.name.clone() });
            }
        }

        let mut terms = vec![Term::Intercept];
        for s in 0..slots.len() {
            terms.push(Term::Slot(s));
        }
        match expansion {
            Expansion::Linear => {}
            Expansion::Polynomial { degree } => {
                for d in 2..=degree {
                    for s in 0..slots.len() {
                        if slots[s].level.is_none() {
                            terms.push(Term::Power(s, d));
                        }
                    }
                }
            }
            Expansion::Interactions { order } => {
                let mut current: Vec<Vec<usize>> = (0..slots.len()).map(|s| vec![s]).collect();
                for _ in 2..=order.max(2) {
                    let mut next = Vec::new();
                    for combo in &current {
                        let last = *combo.last().unwrap();
                        for s in (last + 1)..slots.len() {
                            let mut c = combo.clone();
                            c.push(s);
                            next.push(c);
                        }
                    }
                    for c in &next {
                        terms.push(Term::Product(c.clone()));
                    }
                    if terms.len() > MAX_TERMS {
                        return Err(Error::Config(format!(
                            "interaction expansion exceeds {} terms",
                            MAX_TERMS
                        )));
                    }
                    current = next;
                    if current.is_empty() {
                        break;
                    }
                }
            }
        }
        if terms.len() > MAX_TERMS {
            return Err(Error::Config(format!("design exceeds {} terms", MAX_TERMS)));
        }

        let mut info = DesignInfo {
            slots,
            terms,
            names: Vec::new(),
            treatment_term: None,
            binary_term: Vec::new(),
        };

        // scan fit rows: drop constant terms, record binary flags
        let mut keep = Vec::new();
        let mut binary = Vec::new();
        for (ti, _term) in info.terms.iter().enumerate() {
            if ti == 0 {
                keep.push(0);
                binary.push(false);
                continue;
            }
            let mut first = f64::NAN;
            let mut constant = true;
            let mut is_binary = true;
            for &r in rows {
                let v = info.eval_term(data, r, ti, &[]);
                if first.is_nan() {
                    first = v;
                } else if v != first {
                    constant = false;
                }
                if v != 0.0 && v != 1.0 {
                    is_binary = false;
                }
                if !constant && !is_binary {
                    break;
                }
            }
            if !constant {
                keep.push(ti);
                binary.push(is_binary);
            }
        }
        info.terms = keep.iter().map(|&ti| info.terms[ti].clone()).collect();
        info.binary_term = binary;
        info.names = info.terms.iter().map(|t| info.term_name(t)).collect();
        if let Some(tc) = treatment_col {
            info.treatment_term = info.terms.iter().position(|t| match t {
                Term::Slot(s) => info.slots[*s].dataset_col == tc,
                _ => false,
            });
        }
        Ok(info)
    }

    fn term_name(&self, t: &Term) -> String {
        match t {
            Term::Intercept => "(intercept)".into(),
            Term::Slot(s) => self.slots[*s].name.clone(),
            Term::Power(s, d) => format!("{}^{}", self.slots[*s].name, d),
            Term::Product(ss) => {
                ss.iter().map(|&s| self.slots[s].name.clone()).collect::<Vec<_>>().join(":")
            }
        }
    }

    fn slot_value(
        &self,
        data: &LongitudinalDataset,
        row: usize,
        slot: usize,
        overrides: &[(usize, f64)],
    ) -> f64 {
        let s = &self.slots[slot];
        let raw = overrides
            .iter()
            .find(|(c, _)| *c == s.dataset_col)
            .map(|&(_, v)| v)
            .unwrap_or_else(|| data.value(row, s.dataset_col));
        match s.level {
            Some(lvl) => {
                if raw == lvl {
                    1.0
                } else {
                    0.0
                }
            }
            None => raw,
        }
    }

    fn slot_value_from(&self, values: &[f64], slot: usize) -> f64 {
        let s = &self.slots[slot];
        let raw = values[s.dataset_col];
        match s.level {
            Some(lvl) => {
                if raw == lvl {
                    1.0
                } else {
                    0.0
                }
            }
            None => raw,
        }
    }

    /// Materialize one design row from a raw value vector indexed by
    /// dataset column (used when simulating synthetic records).
    pub fn row_from_values(&self, values: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Intercept => 1.0,
                Term::Slot(s) => self.slot_value_from(values, *s),
                Term::Power(s, d) => self.slot_value_from(values, *s).powi(*d as i32),
                Term::Product(ss) => {
                    let mut v = 1.0;
                    for &s in ss {
                        v *= self.slot_value_from(values, s);
                        if v == 0.0 {
                            break;
                        }
                    }
                    v
                }
            })
            .collect()
    }

    fn eval_term(
        &self,
        data: &LongitudinalDataset,
        row: usize,
        term: usize,
        overrides: &[(usize, f64)],
    ) -> f64 {
        match &self.terms[term] {
            Term::Intercept => 1.0,
            Term::Slot(s) => self.slot_value(data, row, *s, overrides),
            Term::Power(s, d) => self.slot_value(data, row, *s, overrides).powi(*d as i32),
            Term::Product(ss) => {
                let mut v = 1.0;
                for &s in ss {
                    v *= self.slot_value(data, row, s, overrides);
                    if v == 0.0 {
                        break;
                    }
                }
                v
            }
        }
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Materialize the model matrix for `rows` with the given overrides.
    pub fn matrix(
        &self,
        data: &LongitudinalDataset,
        rows: &[usize],
        overrides: &[(usize, f64)],
    ) -> Matrix {
        let k = self.terms.len();
        let mut flat = Vec::with_capacity(rows.len() * k);
        for &r in rows {
            for ti in 0..k {
                flat.push(self.eval_term(data, r, ti, overrides));
            }
        }
        Matrix::from_flat(flat, rows.len(), k)
    }

    pub fn row(&self, data: &LongitudinalDataset, r: usize, overrides: &[(usize, f64)]) -> Vec<f64> {
        (0..self.terms.len()).map(|ti| self.eval_term(data, r, ti, overrides)).collect()
    }

    /// Restrict to a subset of term indices (screening). The intercept is
    /// always retained.
    pub fn keep(&self, keep: &[usize]) -> DesignInfo {
        let mut keep = keep.to_vec();
        if !keep.contains(&0) {
            keep.push(0);
        }
        keep.sort_unstable();
        keep.dedup();
        let terms: Vec<Term> = keep.iter().map(|&i| self.terms[i].clone()).collect();
        let names: Vec<String> = keep.iter().map(|&i| self.names[i].clone()).collect();
        let binary_term: Vec<bool> = keep.iter().map(|&i| self.binary_term[i]).collect();
        let treatment_term = self
            .treatment_term
            .and_then(|old| keep.iter().position(|&i| i == old));
        DesignInfo { slots: self.slots.clone(), terms, names, treatment_term, binary_term }
    }
}

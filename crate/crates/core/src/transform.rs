//! Percentile binning of continuous predictors into left-closed intervals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, DataTable, OrdinalOutcome};
use crate::error::{Result, ScoreError};
use crate::stats::quantile_sorted;

pub const DEFAULT_PERCENTILES: [f64; 4] = [5.0, 20.0, 80.0, 95.0];

/// Cut-offs per continuous variable; categorical variables are absent and
/// pass through unchanged. Serializes as `{"variable": [c1, c2, ...]}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CutoffSpec {
    pub cutoffs: BTreeMap<String, Vec<f64>>,
}

impl CutoffSpec {
    pub fn get(&self, variable: &str) -> Option<&[f64]> {
        self.cutoffs.get(variable).map(Vec::as_slice)
    }

    /// Variables whose cut-off list is empty and so collapse to one interval.
    pub fn single_category(&self) -> Vec<&str> {
        self.cutoffs
            .iter()
            .filter(|(_, c)| c.is_empty())
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, cuts) in &self.cutoffs {
            check_increasing(name, cuts)?;
        }
        Ok(())
    }
}

fn check_increasing(name: &str, cuts: &[f64]) -> Result<()> {
    if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ScoreError::validation(format!(
            "cut-offs for '{name}' must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// Index of the interval holding `value`: the number of cut-offs `<= value`.
pub fn interval_index(cutoffs: &[f64], value: f64) -> usize {
    cutoffs.partition_point(|&c| c <= value)
}

/// `"<c1"`, `"[c1,c2)"`, ..., `">=ck"`; a single `"all"` when there are no cut-offs.
pub fn interval_labels(cutoffs: &[f64]) -> Vec<String> {
    if cutoffs.is_empty() {
        return vec!["all".to_string()];
    }
    let mut labels = Vec::with_capacity(cutoffs.len() + 1);
    labels.push(format!("<{}", cutoffs[0]));
    for w in cutoffs.windows(2) {
        labels.push(format!("[{},{})", w[0], w[1]));
    }
    labels.push(format!(">={}", cutoffs[cutoffs.len() - 1]));
    labels
}

fn observed(name: &str, col: &[Option<f64>]) -> Result<Vec<f64>> {
    col.iter()
        .map(|x| x.ok_or_else(|| ScoreError::validation(format!("'{name}' has missing values; impute first"))))
        .collect()
}

/// Percentile cut-offs for every continuous column of `train`.
pub fn derive_cutoffs(train: &DataTable, percentiles: &[f64]) -> Result<CutoffSpec> {
    if percentiles.iter().any(|p| !(*p > 0.0 && *p < 100.0)) || percentiles.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ScoreError::validation("percentiles must be strictly increasing within (0, 100)"));
    }
    let mut cutoffs = BTreeMap::new();
    for (spec, col) in train.schema().columns.iter().zip(train.columns()) {
        let Column::Continuous(v) = col else { continue };
        let mut values = observed(&spec.name, v)?;
        if values.is_empty() {
            return Err(ScoreError::validation(format!("column '{}' is empty", spec.name)));
        }
        values.sort_by(f64::total_cmp);
        let mut cuts: Vec<f64> = percentiles.iter().map(|p| quantile_sorted(&values, p / 100.0)).collect();
        cuts.dedup();
        // A constant column has nothing to separate.
        if values[0] == values[values.len() - 1] {
            cuts.clear();
        }
        cutoffs.insert(spec.name.clone(), cuts);
    }
    Ok(CutoffSpec { cutoffs })
}

/// Greedily removes cut-offs until every interval holds at least
/// `min_bin_fraction` of the training rows. The sparsest interval (leftmost
/// on ties) is merged with its smaller neighbour (left on ties).
pub fn prune_cutoffs(spec: &CutoffSpec, train: &DataTable, min_bin_fraction: f64) -> Result<CutoffSpec> {
    let mut out = spec.clone();
    if min_bin_fraction <= 0.0 {
        return Ok(out);
    }
    let n = train.n_rows() as f64;
    for (name, cuts) in out.cutoffs.iter_mut() {
        let Some((_, Column::Continuous(v))) = train.column(name) else { continue };
        let values = observed(name, v)?;
        while !cuts.is_empty() {
            let mut counts = vec![0usize; cuts.len() + 1];
            for &x in &values {
                counts[interval_index(cuts, x)] += 1;
            }
            let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
            let (sparsest, &frac) = fractions
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                .expect("at least two intervals");
            if frac >= min_bin_fraction {
                break;
            }
            let last = fractions.len() - 1;
            let drop = if sparsest == 0 {
                0
            } else if sparsest == last {
                last - 1
            } else if fractions[sparsest + 1] < fractions[sparsest - 1] {
                sparsest
            } else {
                sparsest - 1
            };
            cuts.remove(drop);
        }
    }
    Ok(out)
}

/// Replaces cut-offs for the overridden variables verbatim.
pub fn apply_overrides(spec: &CutoffSpec, overrides: &CutoffSpec) -> Result<CutoffSpec> {
    let mut out = spec.clone();
    for (name, cuts) in &overrides.cutoffs {
        check_increasing(name, cuts)?;
        match out.cutoffs.get_mut(name) {
            Some(slot) => *slot = cuts.clone(),
            None => return Err(ScoreError::validation(format!("override for unknown variable '{name}'"))),
        }
    }
    Ok(out)
}

/// One predictor after binning: a label per level and a level per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorizedVariable {
    pub name: String,
    pub levels: Vec<String>,
    pub codes: Vec<usize>,
    /// `Some` for binned continuous variables.
    pub cutoffs: Option<Vec<f64>>,
}

impl CategorizedVariable {
    pub fn is_single_category(&self) -> bool {
        self.levels.len() < 2
    }
}

/// Every predictor as a categorical variable, plus the outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorizedTable {
    pub variables: Vec<CategorizedVariable>,
    pub outcome: OrdinalOutcome,
}

impl CategorizedTable {
    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    pub fn variable(&self, name: &str) -> Option<&CategorizedVariable> {
        self.variables.iter().find(|v| v.name == name)
    }
}

pub fn categorize(table: &DataTable, spec: &CutoffSpec) -> Result<CategorizedTable> {
    let mut variables = Vec::with_capacity(table.columns().len());
    for (col_spec, col) in table.schema().columns.iter().zip(table.columns()) {
        let var = match (&col_spec.kind, col) {
            (ColumnKind::Continuous, Column::Continuous(v)) => {
                let cuts = spec.get(&col_spec.name).ok_or_else(|| {
                    ScoreError::validation(format!("no cut-offs for continuous variable '{}'", col_spec.name))
                })?;
                let values = observed(&col_spec.name, v)?;
                CategorizedVariable {
                    name: col_spec.name.clone(),
                    levels: interval_labels(cuts),
                    codes: values.iter().map(|&x| interval_index(cuts, x)).collect(),
                    cutoffs: Some(cuts.to_vec()),
                }
            }
            (ColumnKind::Categorical { categories }, Column::Categorical(v)) => CategorizedVariable {
                name: col_spec.name.clone(),
                levels: categories.clone(),
                codes: v.clone(),
                cutoffs: None,
            },
            _ => unreachable!("validated table"),
        };
        variables.push(var);
    }
    Ok(CategorizedTable {
        variables,
        outcome: table.outcome().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnSpec, OutcomeSpec, Schema};
    use proptest::prelude::*;

    fn table(cols: &[(&str, Vec<f64>)]) -> DataTable {
        let n = cols[0].1.len();
        let schema = Schema {
            columns: cols.iter().map(|(n, _)| ColumnSpec::continuous(*n)).collect(),
            outcome: OutcomeSpec { name: "y".into(), labels: vec!["1".into(), "2".into()] },
        };
        let columns = cols.iter().map(|(_, v)| Column::Continuous(v.iter().map(|&x| Some(x)).collect())).collect();
        let outcome = OrdinalOutcome::new(schema.outcome.labels.clone(), (0..n).map(|i| i % 2 + 1).collect()).unwrap();
        DataTable::new(schema, columns, outcome).unwrap()
    }

    #[test]
    fn percentiles_of_zero_to_hundred() {
        let t = table(&[("x", (0..=100).map(f64::from).collect())]);
        let spec = derive_cutoffs(&t, &DEFAULT_PERCENTILES).unwrap();
        assert_eq!(spec.get("x").unwrap(), &[5.0, 20.0, 80.0, 95.0]);
    }

    #[test]
    fn constant_column_collapses() {
        let t = table(&[("x", vec![3.0; 20])]);
        let spec = derive_cutoffs(&t, &DEFAULT_PERCENTILES).unwrap();
        assert!(spec.get("x").unwrap().is_empty());
        assert_eq!(spec.single_category(), vec!["x"]);
        let cat = categorize(&t, &spec).unwrap();
        assert_eq!(cat.variables[0].levels, vec!["all"]);
        assert!(cat.variables[0].is_single_category());
    }

    #[test]
    fn coinciding_percentiles_are_deduplicated() {
        let mut v = vec![0.0; 30];
        v.extend((1..=70).map(f64::from));
        let t = table(&[("x", v)]);
        let spec = derive_cutoffs(&t, &DEFAULT_PERCENTILES).unwrap();
        assert_eq!(spec.get("x").unwrap().len(), 3);
        assert_eq!(spec.get("x").unwrap()[0], 0.0);
    }

    #[test]
    fn bad_percentiles_rejected() {
        let t = table(&[("x", vec![1.0, 2.0])]);
        assert!(derive_cutoffs(&t, &[20.0, 5.0]).is_err());
        assert!(derive_cutoffs(&t, &[0.0, 50.0]).is_err());
    }

    #[test]
    fn prune_merges_sparse_leftmost_interval() {
        // Interval fractions 0.005, 0.195, 0.60, 0.15, 0.05 over 1000 rows.
        let mut v = Vec::new();
        for (value, count) in [(0.0, 5), (1.5, 195), (2.5, 600), (3.5, 150), (4.5, 50)] {
            v.extend(std::iter::repeat_n(value, count));
        }
        let t = table(&[("x", v)]);
        let spec = CutoffSpec { cutoffs: [("x".to_string(), vec![1.0, 2.0, 3.0, 4.0])].into() };
        let pruned = prune_cutoffs(&spec, &t, 0.01).unwrap();
        assert_eq!(pruned.get("x").unwrap(), &[2.0, 3.0, 4.0]);
        assert_eq!(prune_cutoffs(&spec, &t, 0.0).unwrap(), spec);
        assert_eq!(prune_cutoffs(&pruned, &t, 0.01).unwrap(), pruned);
    }

    #[test]
    fn prune_interior_merges_into_smaller_neighbour() {
        // Fractions 0.3, 0.004, 0.2, 0.496 -> interval 1 joins interval 2.
        let mut v = Vec::new();
        for (value, count) in [(0.0, 300), (1.5, 4), (2.5, 200), (3.5, 496)] {
            v.extend(std::iter::repeat_n(value, count));
        }
        let t = table(&[("x", v)]);
        let spec = CutoffSpec { cutoffs: [("x".to_string(), vec![1.0, 2.0, 3.0])].into() };
        assert_eq!(prune_cutoffs(&spec, &t, 0.01).unwrap().get("x").unwrap(), &[1.0, 3.0]);
    }

    #[test]
    fn categorize_uses_left_closed_intervals() {
        let cuts = vec![40.0, 80.0, 240.0, 360.0];
        let t = table(&[("ed_los", vec![50.0, 40.0, 10.0, 360.0, 1000.0])]);
        let spec = CutoffSpec { cutoffs: [("ed_los".to_string(), cuts)].into() };
        let cat = categorize(&t, &spec).unwrap();
        let v = &cat.variables[0];
        let labels: Vec<&str> = v.codes.iter().map(|&c| v.levels[c].as_str()).collect();
        assert_eq!(labels, vec!["[40,80)", "[40,80)", "<40", ">=360", ">=360"]);
        assert!(categorize(&t, &CutoffSpec::default()).is_err());
    }

    #[test]
    fn overrides_replace_or_reject() {
        let spec = CutoffSpec { cutoffs: [("age".to_string(), vec![30.0, 50.0]), ("sbp".to_string(), vec![100.0])].into() };
        let ov = CutoffSpec { cutoffs: [("age".to_string(), vec![25.0, 45.0, 75.0, 85.0])].into() };
        let out = apply_overrides(&spec, &ov).unwrap();
        assert_eq!(out.get("age").unwrap(), &[25.0, 45.0, 75.0, 85.0]);
        assert_eq!(out.get("sbp").unwrap(), &[100.0]);
        assert_eq!(apply_overrides(&spec, &CutoffSpec::default()).unwrap(), spec);
        let bad = CutoffSpec { cutoffs: [("age".to_string(), vec![10.0, 10.0])].into() };
        assert!(apply_overrides(&spec, &bad).unwrap_err().to_string().contains("age"));
        let unknown = CutoffSpec { cutoffs: [("bmi".to_string(), vec![1.0])].into() };
        assert!(apply_overrides(&spec, &unknown).is_err());
    }

    #[test]
    fn json_format_is_variable_to_array() {
        let spec = CutoffSpec { cutoffs: [("age".to_string(), vec![25.0, 45.5])].into() };
        assert_eq!(serde_json::to_string(&spec).unwrap(), r#"{"age":[25.0,45.5]}"#);
        let back: CutoffSpec = serde_json::from_str(r#"{"age":[25,45.5]}"#).unwrap();
        assert_eq!(back, spec);
    }

    proptest! {
        #[test]
        fn every_value_lands_in_exactly_one_interval(
            mut cuts in proptest::collection::vec(-100.0f64..100.0, 0..6),
            x in -200.0f64..200.0,
            y in -200.0f64..200.0,
        ) {
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let i = interval_index(&cuts, x);
            prop_assert!(i <= cuts.len());
            let below = i == 0 || cuts[i - 1] <= x;
            let above = i == cuts.len() || x < cuts[i];
            prop_assert!(below && above);
            if x <= y {
                prop_assert!(interval_index(&cuts, x) <= interval_index(&cuts, y));
            }
            // Strictly monotone re-encoding preserves the interval.
            let f = |v: f64| 3.0 * v + 7.0;
            let mapped: Vec<f64> = cuts.iter().map(|&c| f(c)).collect();
            prop_assert_eq!(interval_index(&mapped, f(x)), i);
        }

        #[test]
        fn pruning_leaves_no_sparse_interval(
            values in proptest::collection::vec(0.0f64..10.0, 20..200),
            frac in 0.01f64..0.2,
        ) {
            let t = table(&[("x", values.clone())]);
            let spec = derive_cutoffs(&t, &DEFAULT_PERCENTILES).unwrap();
            let pruned = prune_cutoffs(&spec, &t, frac).unwrap();
            let cuts = pruned.get("x").unwrap();
            if !cuts.is_empty() {
                let mut counts = vec![0usize; cuts.len() + 1];
                for &x in &values {
                    counts[interval_index(cuts, x)] += 1;
                }
                for c in counts {
                    prop_assert!(c as f64 / values.len() as f64 >= frac);
                }
            }
        }
    }
}

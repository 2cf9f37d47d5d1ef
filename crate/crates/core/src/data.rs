//! Tabular data: schema, CSV ingestion, stratified splitting, median
//! imputation and synthetic ordinal data.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal as NormalDist};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScoreError};
use crate::link::Link;
use crate::stats::{self, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical {
                categories: categories.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ColumnKind::Continuous)
    }
}

/// The ordinal outcome column: name plus its labels in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    pub labels: Vec<String>,
}

/// Predictor columns and the outcome column of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub outcome: OutcomeSpec,
}

impl Schema {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for col in &self.columns {
            if col.name.is_empty() {
                return Err(ScoreError::validation("empty column name"));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(ScoreError::validation(format!("duplicate column '{}'", col.name)));
            }
            if let ColumnKind::Categorical { categories } = &col.kind {
                if categories.is_empty() {
                    return Err(ScoreError::validation(format!(
                        "categorical column '{}' has no categories",
                        col.name
                    )));
                }
                let distinct: HashSet<_> = categories.iter().collect();
                if distinct.len() != categories.len() {
                    return Err(ScoreError::validation(format!(
                        "categorical column '{}' lists a category twice",
                        col.name
                    )));
                }
            }
        }
        if seen.contains(self.outcome.name.as_str()) {
            return Err(ScoreError::validation(format!(
                "outcome '{}' is also declared as a predictor",
                self.outcome.name
            )));
        }
        if self.outcome.labels.len() < 2 {
            return Err(ScoreError::validation("outcome needs at least 2 categories"));
        }
        let distinct: HashSet<_> = self.outcome.labels.iter().collect();
        if distinct.len() != self.outcome.labels.len() {
            return Err(ScoreError::validation("duplicate outcome label"));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| ScoreError::io(path.as_ref(), e))?;
        let schema: Schema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn n_categories(&self) -> usize {
        self.outcome.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// `None` marks a missing cell.
    Continuous(Vec<Option<f64>>),
    /// Index into the column's category list.
    Categorical(Vec<usize>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, rows: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Ordinal outcome stored as integers `1..=J`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalOutcome {
    labels: Vec<String>,
    values: Vec<usize>,
}

impl OrdinalOutcome {
    pub fn new(labels: Vec<String>, values: Vec<usize>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(ScoreError::validation("outcome needs at least 2 categories"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v == 0 || v > labels.len()) {
            return Err(ScoreError::validation(format!(
                "outcome value {v} at row {i} outside 1..={}",
                labels.len()
            )));
        }
        Ok(OrdinalOutcome { labels, values })
    }

    pub fn n_categories(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row count per category, index 0 holding category 1.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for &v in &self.values {
            counts[v - 1] += 1;
        }
        counts
    }

    pub fn require_all_categories(&self) -> Result<()> {
        if let Some(j) = self.counts().iter().position(|&c| c == 0) {
            return Err(ScoreError::Degenerate(format!(
                "outcome category {} ('{}') has no rows",
                j + 1,
                self.labels[j]
            )));
        }
        Ok(())
    }
}

/// Predictor columns plus the ordinal outcome, one entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    schema: Schema,
    columns: Vec<Column>,
    outcome: OrdinalOutcome,
}

impl DataTable {
    pub fn new(schema: Schema, columns: Vec<Column>, outcome: OrdinalOutcome) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.columns.len() {
            return Err(ScoreError::validation("column count does not match schema"));
        }
        if outcome.labels != schema.outcome.labels {
            return Err(ScoreError::validation("outcome labels do not match schema"));
        }
        let n = outcome.len();
        for (spec, col) in schema.columns.iter().zip(&columns) {
            if col.len() != n {
                return Err(ScoreError::validation(format!(
                    "column '{}' has {} rows, outcome has {n}",
                    spec.name,
                    col.len()
                )));
            }
            match (&spec.kind, col) {
                (ColumnKind::Continuous, Column::Continuous(v)) => {
                    if v.iter().flatten().any(|x| !x.is_finite()) {
                        return Err(ScoreError::validation(format!("non-finite value in '{}'", spec.name)));
                    }
                }
                (ColumnKind::Categorical { categories }, Column::Categorical(v)) => {
                    if v.iter().any(|&c| c >= categories.len()) {
                        return Err(ScoreError::validation(format!(
                            "category index out of range in '{}'",
                            spec.name
                        )));
                    }
                }
                _ => {
                    return Err(ScoreError::validation(format!(
                        "column '{}' storage does not match its kind",
                        spec.name
                    )))
                }
            }
        }
        Ok(DataTable { schema, columns, outcome })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn outcome(&self) -> &OrdinalOutcome {
        &self.outcome
    }

    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    pub fn column(&self, name: &str) -> Option<(&ColumnSpec, &Column)> {
        let i = self.schema.column_index(name)?;
        Some((&self.schema.columns[i], &self.columns[i]))
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(|c| match c {
            Column::Continuous(v) => v.iter().any(Option::is_none),
            Column::Categorical(_) => false,
        })
    }

    /// Rows at `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> DataTable {
        DataTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.subset(rows)).collect(),
            outcome: OrdinalOutcome {
                labels: self.outcome.labels.clone(),
                values: rows.iter().map(|&r| self.outcome.values[r]).collect(),
            },
        }
    }

    /// Projection onto the named predictors, in the order given.
    pub fn select(&self, names: &[String]) -> Result<DataTable> {
        let mut specs = Vec::with_capacity(names.len());
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let i = self
                .schema
                .column_index(name)
                .ok_or_else(|| ScoreError::validation(format!("unknown variable '{name}'")))?;
            specs.push(self.schema.columns[i].clone());
            cols.push(self.columns[i].clone());
        }
        let schema = Schema {
            columns: specs,
            outcome: self.schema.outcome.clone(),
        };
        DataTable::new(schema, cols, self.outcome.clone())
    }
}

fn parse_outcome(cell: &str, labels: &[String]) -> Option<usize> {
    if let Some(i) = labels.iter().position(|l| l == cell) {
        return Some(i + 1);
    }
    cell.parse::<usize>().ok().filter(|&v| v >= 1 && v <= labels.len())
}

/// Read a comma-delimited table with a header row. Empty continuous cells
/// are missing; categorical cells must be one of the declared categories.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<DataTable> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h == col.name)
            .ok_or_else(|| ScoreError::validation(format!("column '{}' missing from header", col.name)))?;
        positions.push(pos);
    }
    let outcome_pos = headers
        .iter()
        .position(|h| h == schema.outcome.name)
        .ok_or_else(|| ScoreError::validation(format!("outcome column '{}' missing from header", schema.outcome.name)))?;
    for h in headers.iter() {
        if h != schema.outcome.name && schema.column_index(h).is_none() {
            return Err(ScoreError::validation(format!("unknown column '{h}'")));
        }
    }

    let mut columns: Vec<Column> = schema
        .columns
        .iter()
        .map(|c| match c.kind {
            ColumnKind::Continuous => Column::Continuous(Vec::new()),
            ColumnKind::Categorical { .. } => Column::Categorical(Vec::new()),
        })
        .collect();
    let mut outcome = Vec::new();

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for ((spec, col), &pos) in schema.columns.iter().zip(columns.iter_mut()).zip(&positions) {
            let cell = record.get(pos).unwrap_or("").trim();
            match (&spec.kind, col) {
                (ColumnKind::Continuous, Column::Continuous(v)) => {
                    if cell.is_empty() {
                        v.push(None);
                    } else {
                        let x: f64 = cell.parse().map_err(|_| ScoreError::Cell {
                            row,
                            column: spec.name.clone(),
                            message: format!("'{cell}' is not a number"),
                        })?;
                        if !x.is_finite() {
                            return Err(ScoreError::Cell {
                                row,
                                column: spec.name.clone(),
                                message: "non-finite value".into(),
                            });
                        }
                        v.push(Some(x));
                    }
                }
                (ColumnKind::Categorical { categories }, Column::Categorical(v)) => {
                    if cell.is_empty() {
                        return Err(ScoreError::Cell {
                            row,
                            column: spec.name.clone(),
                            message: "missing categorical value (categorical imputation is unsupported)".into(),
                        });
                    }
                    let idx = categories.iter().position(|c| c == cell).ok_or_else(|| ScoreError::Cell {
                        row,
                        column: spec.name.clone(),
                        message: format!("'{cell}' is not a declared category"),
                    })?;
                    v.push(idx);
                }
                _ => unreachable!("column storage built from schema"),
            }
        }
        let cell = record.get(outcome_pos).unwrap_or("").trim();
        let value = parse_outcome(cell, &schema.outcome.labels).ok_or_else(|| ScoreError::Cell {
            row,
            column: schema.outcome.name.clone(),
            message: format!("'{cell}' is not an outcome label or an integer in 1..={}", schema.outcome.labels.len()),
        })?;
        outcome.push(value);
    }

    let outcome = OrdinalOutcome::new(schema.outcome.labels.clone(), outcome)?;
    DataTable::new(schema.clone(), columns, outcome)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<DataTable> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| ScoreError::io(path.as_ref(), e))?;
    read_csv(std::io::BufReader::new(file), schema)
}

pub fn write_csv<W: Write>(table: &DataTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = table.schema.columns.iter().map(|c| c.name.as_str()).collect();
    header.push(&table.schema.outcome.name);
    wtr.write_record(&header)?;
    for r in 0..table.n_rows() {
        let mut record = Vec::with_capacity(header.len());
        for (spec, col) in table.schema.columns.iter().zip(&table.columns) {
            record.push(match (&spec.kind, col) {
                (_, Column::Continuous(v)) => v[r].map(|x| x.to_string()).unwrap_or_default(),
                (ColumnKind::Categorical { categories }, Column::Categorical(v)) => categories[v[r]].clone(),
                _ => unreachable!("validated table"),
            });
        }
        record.push(table.outcome.labels[table.outcome.values[r] - 1].clone());
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| ScoreError::io("<csv writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        })
    }
}

impl std::str::FromStr for SplitName {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            other => Err(ScoreError::validation(format!("unknown split '{other}'"))),
        }
    }
}

/// Disjoint train/validation/test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitIndices {
    pub fn get(&self, split: SplitName) -> &[usize] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    /// Writes `row_id,split` lines in row order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut labels = vec![None; self.n_rows()];
        for split in SplitName::ALL {
            for &i in self.get(split) {
                labels[i] = Some(split);
            }
        }
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["row_id", "split"])?;
        for (i, s) in labels.iter().enumerate() {
            let s = s.ok_or_else(|| ScoreError::validation(format!("row {i} not assigned to a split")))?;
            wtr.write_record([i.to_string(), s.to_string()])?;
        }
        wtr.flush().map_err(|e| ScoreError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, seed: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut out = SplitIndices {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            seed,
        };
        for record in rdr.records() {
            let record = record?;
            let id: usize = record
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ScoreError::validation("bad row_id in split file"))?;
            let split: SplitName = record.get(1).unwrap_or("").parse()?;
            match split {
                SplitName::Train => out.train.push(id),
                SplitName::Validation => out.validation.push(id),
                SplitName::Test => out.test.push(id),
            }
        }
        for v in [&mut out.train, &mut out.validation, &mut out.test] {
            v.sort_unstable();
        }
        Ok(out)
    }
}

/// Largest-remainder apportionment of `n` rows over `ratios`.
fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &s in order.iter().take(n.saturating_sub(assigned)) {
        counts[s] += 1;
    }
    counts
}

pub fn validate_ratios(ratios: &[f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(ScoreError::validation("split ratios must be positive"));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ScoreError::validation(format!("split ratios sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Stratified random split: every outcome category is apportioned across
/// the three splits by largest remainder, so per-category counts are
/// within one row of `ratio * category size`.
pub fn stratified_split(table: &DataTable, ratios: [f64; 3], seed: u64) -> Result<SplitIndices> {
    validate_ratios(&ratios)?;
    let j = table.outcome.n_categories();
    let mut by_category: Vec<Vec<usize>> = vec![Vec::new(); j];
    for (i, &y) in table.outcome.values.iter().enumerate() {
        by_category[y - 1].push(i);
    }

    let mut out = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (c, mut rows) in by_category.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 3 {
            return Err(ScoreError::validation(format!(
                "outcome category {} has {} rows, need at least 3 to split",
                c + 1,
                rows.len()
            )));
        }
        let mut rng = stream_rng(seed, c as u64);
        rows.shuffle(&mut rng);
        let [n_train, n_val, _] = apportion(rows.len(), &ratios);
        out.train.extend_from_slice(&rows[..n_train]);
        out.validation.extend_from_slice(&rows[n_train..n_train + n_val]);
        out.test.extend_from_slice(&rows[n_train + n_val..]);
    }
    for v in [&mut out.train, &mut out.validation, &mut out.test] {
        v.sort_unstable();
    }
    Ok(out)
}

/// Median fill value per continuous column, computed on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationPlan {
    pub reference: SplitName,
    pub fills: BTreeMap<String, f64>,
}

pub fn plan_imputation(table: &DataTable, split: &SplitIndices, reference: SplitName) -> Result<ImputationPlan> {
    let rows = split.get(reference);
    if rows.is_empty() {
        return Err(ScoreError::validation(format!("reference split '{reference}' is empty")));
    }
    let mut fills = BTreeMap::new();
    for (spec, col) in table.schema.columns.iter().zip(&table.columns) {
        if let Column::Continuous(v) = col {
            let observed: Vec<f64> = rows.iter().filter_map(|&r| v[r]).collect();
            let m = stats::median(&observed).ok_or_else(|| {
                ScoreError::Degenerate(format!(
                    "column '{}' has no observed values in the {reference} split",
                    spec.name
                ))
            })?;
            fills.insert(spec.name.clone(), m);
        }
    }
    Ok(ImputationPlan { reference, fills })
}

pub fn impute(table: &DataTable, plan: &ImputationPlan) -> Result<DataTable> {
    let mut columns = table.columns.clone();
    for (spec, col) in table.schema.columns.iter().zip(columns.iter_mut()) {
        if let Column::Continuous(v) = col {
            if v.iter().all(Option::is_some) {
                continue;
            }
            let fill = *plan.fills.get(&spec.name).ok_or_else(|| {
                ScoreError::validation(format!("column '{}' has missing cells but no imputation entry", spec.name))
            })?;
            for cell in v.iter_mut() {
                cell.get_or_insert(fill);
            }
        }
    }
    DataTable::new(table.schema.clone(), columns, table.outcome.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PredictorDistribution {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    /// Two-level categorical column `"0"`/`"1"`; the coefficient applies to `"1"`.
    Binary { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPredictor {
    pub name: String,
    pub distribution: PredictorDistribution,
    pub beta: f64,
}

/// Generative proportional-odds design for simulation studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub theta: Vec<f64>,
    pub predictors: Vec<SyntheticPredictor>,
    /// Extra standard-normal columns named `noise_1..` with zero effect.
    #[serde(default)]
    pub noise_variables: usize,
    #[serde(default)]
    pub link: Link,
    pub seed: u64,
    #[serde(default = "default_outcome_name")]
    pub outcome_name: String,
}

fn default_outcome_name() -> String {
    "outcome".to_string()
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(ScoreError::validation("synthetic n must be at least 1"));
        }
        if self.theta.is_empty() {
            return Err(ScoreError::validation("theta needs at least one intercept"));
        }
        if self.theta.iter().any(|t| !t.is_finite()) || self.theta.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ScoreError::validation("theta must be finite and strictly increasing"));
        }
        for p in &self.predictors {
            if !p.beta.is_finite() {
                return Err(ScoreError::validation(format!("non-finite beta for '{}'", p.name)));
            }
            let ok = match p.distribution {
                PredictorDistribution::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
                PredictorDistribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
                PredictorDistribution::Binary { p } => (0.0..=1.0).contains(&p),
            };
            if !ok {
                return Err(ScoreError::validation(format!("invalid distribution for '{}'", p.name)));
            }
        }
        self.schema().validate()
    }

    pub fn all_predictors(&self) -> Vec<SyntheticPredictor> {
        let mut all = self.predictors.clone();
        all.extend((1..=self.noise_variables).map(|i| SyntheticPredictor {
            name: format!("noise_{i}"),
            distribution: PredictorDistribution::Normal { mean: 0.0, sd: 1.0 },
            beta: 0.0,
        }));
        all
    }

    pub fn schema(&self) -> Schema {
        let columns = self
            .all_predictors()
            .into_iter()
            .map(|p| match p.distribution {
                PredictorDistribution::Binary { .. } => ColumnSpec::categorical(p.name, ["0", "1"]),
                _ => ColumnSpec::continuous(p.name),
            })
            .collect();
        Schema {
            columns,
            outcome: OutcomeSpec {
                name: self.outcome_name.clone(),
                labels: (1..=self.theta.len() + 1).map(|j| j.to_string()).collect(),
            },
        }
    }
}

/// Draw one outcome in `1..=J` given linear predictor `eta`.
pub fn draw_outcome<R: Rng>(rng: &mut R, theta: &[f64], eta: f64, link: Link) -> usize {
    let u: f64 = rng.random();
    theta
        .iter()
        .position(|&t| u <= link.cdf(t - eta))
        .map_or(theta.len() + 1, |j| j + 1)
}

/// Simulated table plus each row's true linear predictor.
pub fn generate_synthetic_with_eta(spec: &SyntheticSpec) -> Result<(DataTable, Vec<f64>)> {
    spec.validate()?;
    let predictors = spec.all_predictors();
    let rows: Vec<(Vec<f64>, usize, f64)> = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(spec.seed, i as u64);
            let mut eta = 0.0;
            let values: Vec<f64> = predictors
                .iter()
                .map(|p| {
                    let x = match p.distribution {
                        PredictorDistribution::Normal { mean, sd } => {
                            NormalDist::new(mean, sd).expect("validated sd").sample(&mut rng)
                        }
                        PredictorDistribution::Uniform { low, high } => rng.random_range(low..high),
                        PredictorDistribution::Binary { p } => f64::from(u8::from(rng.random_bool(p))),
                    };
                    eta += p.beta * x;
                    x
                })
                .collect();
            let y = draw_outcome(&mut rng, &spec.theta, eta, spec.link);
            (values, y, eta)
        })
        .collect();

    let schema = spec.schema();
    let columns = predictors
        .iter()
        .enumerate()
        .map(|(k, p)| match p.distribution {
            PredictorDistribution::Binary { .. } => Column::Categorical(rows.iter().map(|r| r.0[k] as usize).collect()),
            _ => Column::Continuous(rows.iter().map(|r| Some(r.0[k])).collect()),
        })
        .collect();
    let outcome = OrdinalOutcome::new(schema.outcome.labels.clone(), rows.iter().map(|r| r.1).collect())?;
    let eta = rows.iter().map(|r| r.2).collect();
    Ok((DataTable::new(schema, columns, outcome)?, eta))
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DataTable> {
    generate_synthetic_with_eta(spec).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc_schema() -> Schema {
        Schema {
            columns: vec![ColumnSpec::continuous("x"), ColumnSpec::categorical("g", ["a", "b"])],
            outcome: OutcomeSpec {
                name: "y".into(),
                labels: vec!["A".into(), "B".into(), "C".into()],
            },
        }
    }

    #[test]
    fn outcome_labels_encode_by_declared_order() {
        let csv = "x,g,y\n1.5,a,C\n2,b,A\n3,a,B\n";
        let t = read_csv(csv.as_bytes(), &abc_schema()).unwrap();
        assert_eq!(t.outcome().values(), &[3, 1, 2]);
        let csv = "x,g,y\n1,a,2\n";
        let t = read_csv(csv.as_bytes(), &abc_schema()).unwrap();
        assert_eq!(t.outcome().values(), &[2]);
    }

    #[test]
    fn empty_continuous_cell_is_missing() {
        let csv = "x,g,y\n,a,A\n4,b,B\n";
        let t = read_csv(csv.as_bytes(), &abc_schema()).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.columns()[0], Column::Continuous(vec![None, Some(4.0)]));
    }

    #[test]
    fn bad_outcome_names_row_and_column() {
        let csv = "x,g,y\n1,a,A\n1,a,D\n";
        let err = read_csv(csv.as_bytes(), &abc_schema()).unwrap_err();
        match err {
            ScoreError::Cell { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingestion_rejects_bad_cells_and_columns() {
        let s = abc_schema();
        assert!(read_csv("x,g,y\n1,z,A\n".as_bytes(), &s).is_err());
        assert!(read_csv("x,g,y\n1,,A\n".as_bytes(), &s).is_err());
        assert!(read_csv("x,g,y,extra\n1,a,A,0\n".as_bytes(), &s).is_err());
        assert!(read_csv("x,y\n1,A\n".as_bytes(), &s).is_err());
        assert!(read_csv("x,g,y\nfoo,a,A\n".as_bytes(), &s).is_err());
    }

    #[test]
    fn schema_rejects_duplicates() {
        let mut s = abc_schema();
        s.columns.push(ColumnSpec::continuous("x"));
        assert!(s.validate().is_err());
        let mut s = abc_schema();
        s.columns[1] = ColumnSpec::categorical("g", ["a", "a"]);
        assert!(s.validate().is_err());
        let mut s = abc_schema();
        s.columns[1] = ColumnSpec::categorical("g", Vec::<String>::new());
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let csv = "x,g,y\n1.5,a,C\n,b,A\n3,a,B\n";
        let t = read_csv(csv.as_bytes(), &abc_schema()).unwrap();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), csv);
    }

    fn table_with_counts(counts: &[usize]) -> DataTable {
        let values: Vec<usize> = counts.iter().enumerate().flat_map(|(j, &c)| std::iter::repeat_n(j + 1, c)).collect();
        let n = values.len();
        let labels: Vec<String> = (1..=counts.len().max(2)).map(|j| j.to_string()).collect();
        let schema = Schema {
            columns: vec![ColumnSpec::continuous("x")],
            outcome: OutcomeSpec { name: "y".into(), labels: labels.clone() },
        };
        let col = Column::Continuous((0..n).map(|i| Some(i as f64)).collect());
        DataTable::new(schema, vec![col], OrdinalOutcome::new(labels, values).unwrap()).unwrap()
    }

    fn count_in(split: &[usize], t: &DataTable, cat: usize) -> usize {
        split.iter().filter(|&&i| t.outcome().values()[i] == cat).count()
    }

    #[test]
    fn split_counts_follow_ratios_per_category() {
        let t = table_with_counts(&[807, 125, 68]);
        let s = stratified_split(&t, [0.7, 0.1, 0.2], 3).unwrap();
        for (cat, expected) in [(1, 565.0), (2, 87.0), (3, 48.0)] {
            let got = count_in(&s.train, &t, cat) as f64;
            assert!((got - expected).abs() <= 1.0, "cat {cat}: {got}");
        }
        for (cat, size) in [(1, 807.0), (2, 125.0), (3, 68.0)] {
            for (split, r) in [(&s.train, 0.7), (&s.validation, 0.1), (&s.test, 0.2)] {
                assert!((count_in(split, &t, cat) as f64 - r * size).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn split_exact_small_case_and_determinism() {
        let t = table_with_counts(&[10]);
        let s = stratified_split(&t, [0.7, 0.1, 0.2], 9).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s, stratified_split(&t, [0.7, 0.1, 0.2], 9).unwrap());
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let t = table_with_counts(&[10, 2]);
        assert!(stratified_split(&t, [0.7, 0.1, 0.2], 1).is_err());
        let t = table_with_counts(&[10, 10]);
        assert!(stratified_split(&t, [0.5, 0.5, 0.2], 1).is_err());
        assert!(stratified_split(&t, [1.0, 0.0, 0.0], 1).is_err());
    }

    #[test]
    fn split_csv_round_trip() {
        let t = table_with_counts(&[20, 12]);
        let s = stratified_split(&t, [0.7, 0.1, 0.2], 5).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(SplitIndices::read_csv(buf.as_slice(), 5).unwrap(), s);
    }

    fn one_column(values: Vec<Option<f64>>) -> DataTable {
        let n = values.len();
        let schema = Schema {
            columns: vec![ColumnSpec::continuous("v")],
            outcome: OutcomeSpec { name: "y".into(), labels: vec!["1".into(), "2".into()] },
        };
        let outcome = OrdinalOutcome::new(schema.outcome.labels.clone(), (0..n).map(|i| i % 2 + 1).collect()).unwrap();
        DataTable::new(schema, vec![Column::Continuous(values)], outcome).unwrap()
    }

    fn all_train(n: usize) -> SplitIndices {
        SplitIndices { train: (0..n).collect(), validation: vec![], test: vec![], seed: 0 }
    }

    #[test]
    fn plan_uses_reference_median() {
        let t = one_column(vec![Some(1.0), Some(2.0), Some(4.0), None]);
        let p = plan_imputation(&t, &all_train(4), SplitName::Train).unwrap();
        assert_eq!(p.fills["v"], 2.0);
        let t = one_column(vec![Some(1.0), Some(2.0), Some(3.0), Some(10.0)]);
        let p = plan_imputation(&t, &all_train(4), SplitName::Train).unwrap();
        assert_eq!(p.fills["v"], 2.5);
    }

    #[test]
    fn plan_errors_on_all_missing_or_empty_reference() {
        let t = one_column(vec![None, None]);
        assert!(plan_imputation(&t, &all_train(2), SplitName::Train).is_err());
        let t = one_column(vec![Some(1.0), None]);
        assert!(plan_imputation(&t, &all_train(2), SplitName::Validation).is_err());
    }

    #[test]
    fn impute_fills_and_is_idempotent() {
        let t = one_column(vec![Some(1.0), None, Some(4.0)]);
        let plan = ImputationPlan { reference: SplitName::Train, fills: [("v".to_string(), 2.0)].into() };
        let once = impute(&t, &plan).unwrap();
        assert_eq!(once.columns()[0], Column::Continuous(vec![Some(1.0), Some(2.0), Some(4.0)]));
        assert_eq!(impute(&once, &plan).unwrap(), once);
        let complete = one_column(vec![Some(3.0), Some(5.0)]);
        assert_eq!(impute(&complete, &plan).unwrap(), complete);
        let empty_plan = ImputationPlan { reference: SplitName::Train, fills: BTreeMap::new() };
        assert!(impute(&t, &empty_plan).is_err());
    }

    fn intercept_only(n: usize, theta: Vec<f64>, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n,
            theta,
            predictors: vec![],
            noise_variables: 0,
            link: Link::Logit,
            seed,
            outcome_name: "y".into(),
        }
    }

    #[test]
    fn synthetic_symmetric_intercept() {
        let n = 20_000;
        let t = generate_synthetic(&intercept_only(n, vec![0.0], 11)).unwrap();
        let p1 = t.outcome().counts()[0] as f64 / n as f64;
        assert!((p1 - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{p1}");
    }

    #[test]
    fn synthetic_cumulative_frequencies() {
        let n = 50_000;
        let t = generate_synthetic(&intercept_only(n, vec![0.0, 4f64.ln()], 5)).unwrap();
        let counts = t.outcome().counts();
        let c1 = counts[0] as f64 / n as f64;
        let c2 = (counts[0] + counts[1]) as f64 / n as f64;
        for (got, p) in [(c1, 0.5), (c2, 0.8)] {
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((got - p).abs() < 3.0 * sd, "{got} vs {p}");
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let mut spec = intercept_only(500, vec![-0.5, 0.5], 77);
        spec.predictors.push(SyntheticPredictor {
            name: "a".into(),
            distribution: PredictorDistribution::Normal { mean: 0.0, sd: 1.0 },
            beta: 1.0,
        });
        spec.predictors.push(SyntheticPredictor {
            name: "b".into(),
            distribution: PredictorDistribution::Binary { p: 0.3 },
            beta: 0.5,
        });
        spec.noise_variables = 2;
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.schema().columns.len(), 4);
        assert_eq!(a.schema().columns[3].name, "noise_2");
    }

    #[test]
    fn synthetic_spec_validation() {
        assert!(generate_synthetic(&intercept_only(10, vec![1.0, 0.0], 1)).is_err());
        assert!(generate_synthetic(&intercept_only(0, vec![0.0], 1)).is_err());
    }
}

//! Integer point scorecards derived from a positive-coefficient fit, and the
//! total-score lookup table of observed outcome proportions.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, DataTable, OrdinalOutcome};
use crate::error::{Result, ScoreError};
use crate::link::Link;
use crate::pom::PomFit;
use crate::transform::{interval_index, CategorizedTable, CutoffSpec};

/// Tolerance on probability sums when reading lookup tables from disk,
/// which usually carry rounded proportions.
pub const LOADED_SUM_TOLERANCE: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardLevel {
    pub label: String,
    pub points: i64,
}

/// One row group of the scoring table. Continuous variables carry their
/// cut-offs and have one level per interval, lowest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardVariable {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<f64>>,
    pub levels: Vec<CardLevel>,
}

impl CardVariable {
    pub fn max_points(&self) -> i64 {
        self.levels.iter().map(|l| l.points).max().unwrap_or(0)
    }

    /// Level index for a raw cell: a number for binned variables, a label
    /// otherwise.
    pub fn level_of(&self, cell: &str) -> Result<usize> {
        let cell = cell.trim();
        match &self.cutoffs {
            Some(cuts) => {
                let x: f64 = cell
                    .parse()
                    .ok()
                    .filter(|x: &f64| x.is_finite())
                    .ok_or_else(|| ScoreError::validation(format!("'{cell}' is not a number for '{}'", self.name)))?;
                Ok(interval_index(cuts, x))
            }
            None => self
                .levels
                .iter()
                .position(|l| l.label == cell)
                .ok_or_else(|| ScoreError::validation(format!("unknown level '{cell}' for '{}'", self.name))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub cutoffs: CutoffSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<Link>,
}

fn one() -> f64 {
    1.0
}

/// Hand-written cards may omit `min_coefficient` and `scale_factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub variables: Vec<CardVariable>,
    pub outcome_labels: Vec<String>,
    /// Smallest positive coefficient of the source fit.
    #[serde(default = "one")]
    pub min_coefficient: f64,
    /// Rescaling applied after min-normalization.
    #[serde(default = "one")]
    pub scale_factor: f64,
    pub max_total: i64,
    #[serde(default)]
    pub provenance: Provenance,
}

impl ScoreCard {
    /// Points per unit of `x'beta` before rounding.
    pub fn multiplier(&self) -> f64 {
        self.scale_factor / self.min_coefficient
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcome_labels.len() < 2 {
            return Err(ScoreError::validation("scorecard needs at least 2 outcome labels"));
        }
        let mut total = 0;
        for v in &self.variables {
            if v.levels.is_empty() {
                return Err(ScoreError::validation(format!("'{}' has no levels", v.name)));
            }
            if let Some(cuts) = &v.cutoffs {
                if cuts.windows(2).any(|w| w[0] >= w[1]) || cuts.len() + 1 != v.levels.len() {
                    return Err(ScoreError::validation(format!(
                        "'{}' needs increasing cut-offs and one level per interval",
                        v.name
                    )));
                }
            }
            if v.levels.iter().any(|l| l.points < 0) {
                return Err(ScoreError::validation(format!("'{}' has negative points", v.name)));
            }
            if !v.levels.iter().any(|l| l.points == 0) {
                return Err(ScoreError::validation(format!("'{}' has no zero-point level", v.name)));
            }
            total += v.max_points();
        }
        if total != self.max_total {
            return Err(ScoreError::validation(format!(
                "max_total {} does not equal the attainable maximum {total}",
                self.max_total
            )));
        }
        Ok(())
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    /// Sum of partial scores for level codes aligned with `variables`.
    pub fn total_score_codes(&self, codes: &[usize]) -> Result<i64> {
        if codes.len() != self.variables.len() {
            return Err(ScoreError::validation("row does not match the scorecard variables"));
        }
        self.variables
            .iter()
            .zip(codes)
            .map(|(v, &c)| {
                v.levels
                    .get(c)
                    .map(|l| l.points)
                    .ok_or_else(|| ScoreError::validation(format!("level {c} out of range for '{}'", v.name)))
            })
            .sum()
    }

    /// Total score of one raw row: one cell per scorecard variable, in order.
    pub fn total_score(&self, cells: &[&str]) -> Result<i64> {
        if cells.len() != self.variables.len() {
            return Err(ScoreError::validation("row does not match the scorecard variables"));
        }
        let codes = self
            .variables
            .iter()
            .zip(cells)
            .map(|(v, c)| v.level_of(c))
            .collect::<Result<Vec<_>>>()?;
        self.total_score_codes(&codes)
    }

    /// Scores rows binned with the card's own cut-offs, matching levels by label.
    pub fn score_categorized(&self, data: &CategorizedTable) -> Result<Vec<i64>> {
        let mut maps = Vec::with_capacity(self.variables.len());
        for v in &self.variables {
            let dv = data
                .variable(&v.name)
                .ok_or_else(|| ScoreError::validation(format!("data lacks variable '{}'", v.name)))?;
            let map = dv
                .levels
                .iter()
                .map(|l| v.levels.iter().position(|m| &m.label == l))
                .collect::<Vec<_>>();
            maps.push((dv, map));
        }
        (0..data.n_rows())
            .map(|r| {
                maps.iter()
                    .zip(&self.variables)
                    .map(|((dv, map), v)| {
                        let code = dv.codes[r];
                        map[code].map(|i| v.levels[i].points).ok_or_else(|| {
                            ScoreError::validation(format!("level '{}' not on the card for '{}'", dv.levels[code], v.name))
                        })
                    })
                    .sum()
            })
            .collect()
    }

    /// Scores raw (imputed) rows using the card's cut-offs.
    pub fn score_data(&self, data: &DataTable) -> Result<Vec<i64>> {
        let mut per_var: Vec<Vec<i64>> = Vec::with_capacity(self.variables.len());
        for v in &self.variables {
            let (spec, col) = data
                .column(&v.name)
                .ok_or_else(|| ScoreError::validation(format!("data lacks variable '{}'", v.name)))?;
            let points = match (&spec.kind, col, &v.cutoffs) {
                (ColumnKind::Continuous, Column::Continuous(x), Some(cuts)) => x
                    .iter()
                    .map(|x| {
                        let x = x.ok_or_else(|| ScoreError::validation(format!("missing value in '{}'", v.name)))?;
                        Ok(v.levels[interval_index(cuts, x)].points)
                    })
                    .collect::<Result<Vec<_>>>()?,
                (ColumnKind::Categorical { categories }, Column::Categorical(x), None) => {
                    let map: Vec<Option<i64>> = categories
                        .iter()
                        .map(|c| v.levels.iter().find(|l| &l.label == c).map(|l| l.points))
                        .collect();
                    x.iter()
                        .map(|&c| {
                            map[c].ok_or_else(|| {
                                ScoreError::validation(format!("category '{}' not on the card for '{}'", categories[c], v.name))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                _ => return Err(ScoreError::validation(format!("column kind of '{}' does not match the card", v.name))),
            };
            per_var.push(points);
        }
        Ok((0..data.n_rows()).map(|r| per_var.iter().map(|p| p[r]).sum()).collect())
    }

    /// Checklist form: `variable,interval,partial_score`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["variable", "interval", "partial_score"])?;
        for v in &self.variables {
            for l in &v.levels {
                wtr.write_record([v.name.as_str(), l.label.as_str(), &l.points.to_string()])?;
            }
        }
        wtr.flush().map_err(|e| ScoreError::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Round half away from zero.
fn round_points(x: f64) -> i64 {
    x.round() as i64
}

/// Turns non-negative coefficients into integer partial scores: divide by
/// the smallest positive coefficient, optionally rescale so the attainable
/// maximum is `max_total_target`, then round.
pub fn derive_scorecard(fit: &PomFit, max_total_target: Option<f64>) -> Result<ScoreCard> {
    if let Some(c) = fit.variables.iter().flat_map(|v| v.coefficients.iter()).find(|c| **c < 0.0) {
        return Err(ScoreError::validation(format!(
            "coefficient {c} is negative; refit with positive references first"
        )));
    }
    let min_coefficient = fit
        .variables
        .iter()
        .flat_map(|v| v.coefficients.iter().copied())
        .filter(|&c| c > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min_coefficient.is_finite() {
        return Err(ScoreError::Degenerate("all coefficients are zero".into()));
    }
    let normalized_max: f64 = fit
        .variables
        .iter()
        .map(|v| v.coefficients.iter().fold(0.0f64, |m, &c| m.max(c / min_coefficient)))
        .sum();
    let scale_factor = match max_total_target {
        Some(t) if !(t.is_finite() && t > 0.0) => {
            return Err(ScoreError::validation("max_total_target must be positive"))
        }
        Some(t) => t / normalized_max,
        None => 1.0,
    };
    let multiplier = scale_factor / min_coefficient;

    let mut cutoffs = CutoffSpec::default();
    let variables: Vec<CardVariable> = fit
        .variables
        .iter()
        .map(|v| {
            if let Some(c) = &v.cutoffs {
                cutoffs.cutoffs.insert(v.name.clone(), c.clone());
            }
            CardVariable {
                name: v.name.clone(),
                cutoffs: v.cutoffs.clone(),
                levels: v
                    .levels
                    .iter()
                    .zip(&v.coefficients)
                    .map(|(label, &c)| CardLevel {
                        label: label.clone(),
                        points: round_points(c * multiplier),
                    })
                    .collect(),
            }
        })
        .collect();
    let max_total = variables.iter().map(CardVariable::max_points).sum();
    Ok(ScoreCard {
        variables,
        outcome_labels: fit.outcome_labels.clone(),
        min_coefficient,
        scale_factor,
        max_total,
        provenance: Provenance {
            cutoffs,
            fit_digest: None,
            link: Some(fit.link),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LookupOptions {
    pub bin_width: i64,
    pub min_bin_count: usize,
}

impl Default for LookupOptions {
    fn default() -> Self {
        LookupOptions {
            bin_width: 5,
            min_bin_count: 20,
        }
    }
}

/// Score bin `(lower, upper]`; the first bin is closed at `lower`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupBin {
    pub lower: i64,
    pub upper: i64,
    pub probs: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub bins: Vec<LookupBin>,
}

impl LookupTable {
    pub fn n_categories(&self) -> usize {
        self.bins.first().map_or(0, |b| b.probs.len())
    }

    pub fn bin_for(&self, score: i64) -> Option<&LookupBin> {
        let first = self.bins.first()?;
        if score < first.lower {
            return None;
        }
        self.bins
            .iter()
            .enumerate()
            .find(|(i, b)| score <= b.upper && (score > b.lower || *i == 0))
            .map(|(_, b)| b)
    }

    /// Probability vector of the bin holding `score`.
    pub fn predict_probs(&self, score: i64) -> Result<&[f64]> {
        self.bin_for(score)
            .map(|b| b.probs.as_slice())
            .ok_or_else(|| ScoreError::validation(format!("score {score} is outside the lookup table")))
    }

    /// Bins must be contiguous and each probability vector must sum to 1
    /// within `tolerance`.
    pub fn validate(&self, tolerance: f64) -> Result<()> {
        if self.bins.is_empty() {
            return Err(ScoreError::validation("lookup table has no bins"));
        }
        let j = self.n_categories();
        if j < 2 {
            return Err(ScoreError::validation("lookup table needs at least 2 categories"));
        }
        for (i, b) in self.bins.iter().enumerate() {
            if b.probs.len() != j || b.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(ScoreError::validation(format!("bin {i} has an invalid probability vector")));
            }
            let sum: f64 = b.probs.iter().sum();
            if (sum - 1.0).abs() > tolerance {
                return Err(ScoreError::validation(format!("bin {i} probabilities sum to {sum}")));
            }
            if b.upper < b.lower || (i > 0 && b.upper == b.lower) {
                return Err(ScoreError::validation(format!("bin {i} is empty")));
            }
            if i > 0 && self.bins[i - 1].upper != b.lower {
                return Err(ScoreError::validation(format!("bin {i} does not start where bin {} ends", i - 1)));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["bin_lower".to_string(), "bin_upper".to_string()];
        header.extend((1..=self.n_categories()).map(|j| format!("p_{j}")));
        header.push("n".into());
        wtr.write_record(&header)?;
        for b in &self.bins {
            let mut rec = vec![b.lower.to_string(), b.upper.to_string()];
            rec.extend(b.probs.iter().map(|p| p.to_string()));
            rec.push(b.count.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| ScoreError::io("<csv writer>", e))?;
        Ok(())
    }

    /// Reads `bin_lower,bin_upper,p_1..p_J,n`; an empty `n` reads as 0.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let width = rdr.headers()?.len();
        if width < 5 {
            return Err(ScoreError::validation("lookup table needs bin_lower, bin_upper, >= 2 probabilities and n"));
        }
        let mut bins = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let num = |i: usize| -> Result<&str> {
                record
                    .get(i)
                    .map(str::trim)
                    .ok_or_else(|| ScoreError::validation(format!("lookup row {row} is short")))
            };
            let bad = |what: &str| ScoreError::validation(format!("lookup row {row}: bad {what}"));
            let lower: i64 = num(0)?.parse().map_err(|_| bad("bin_lower"))?;
            let upper: i64 = num(1)?.parse().map_err(|_| bad("bin_upper"))?;
            let probs = (2..width - 1)
                .map(|i| num(i)?.parse::<f64>().map_err(|_| bad("probability")))
                .collect::<Result<Vec<_>>>()?;
            let n = num(width - 1)?;
            let count = if n.is_empty() { 0 } else { n.parse().map_err(|_| bad("n"))? };
            bins.push(LookupBin { lower, upper, probs, count });
        }
        let table = LookupTable { bins };
        table.validate(LOADED_SUM_TOLERANCE)?;
        Ok(table)
    }
}

/// Observed outcome proportions per total-score bin. Bins of `bin_width`
/// start at `[0, w]`; consecutive bins are merged left to right until each
/// holds `min_bin_count` rows, and a sparse remainder joins the last bin.
pub fn build_lookup(card: &ScoreCard, scores: &[i64], outcome: &OrdinalOutcome, opts: &LookupOptions) -> Result<LookupTable> {
    if scores.is_empty() {
        return Err(ScoreError::validation("cannot build a lookup table from an empty training set"));
    }
    if scores.len() != outcome.len() {
        return Err(ScoreError::validation("scores and outcomes differ in length"));
    }
    if opts.bin_width < 1 || opts.min_bin_count < 1 {
        return Err(ScoreError::validation("bin_width and min_bin_count must be at least 1"));
    }
    let max_total = card.max_total.max(0);
    if let Some(s) = scores.iter().find(|&&s| s < 0 || s > max_total) {
        return Err(ScoreError::validation(format!("score {s} outside [0, {max_total}]")));
    }
    let j = outcome.n_categories();
    let n_raw = ((max_total + opts.bin_width - 1) / opts.bin_width).max(1) as usize;
    let raw_upper = |i: usize| ((i as i64 + 1) * opts.bin_width).min(max_total);
    let mut raw_counts = vec![vec![0usize; j]; n_raw];
    for (&s, &y) in scores.iter().zip(outcome.values()) {
        // First bin is [0, w]; later bins are (lower, upper].
        let i = if s == 0 { 0 } else { ((s - 1) / opts.bin_width) as usize };
        raw_counts[i.min(n_raw - 1)][y - 1] += 1;
    }

    let mut groups: Vec<(i64, i64, Vec<usize>)> = Vec::new();
    let mut open: Option<(i64, i64, Vec<usize>)> = None;
    for (i, counts) in raw_counts.iter().enumerate() {
        let lower = if i == 0 { 0 } else { i as i64 * opts.bin_width };
        let g = open.get_or_insert_with(|| (lower, lower, vec![0; j]));
        g.1 = raw_upper(i);
        for (acc, &c) in g.2.iter_mut().zip(counts) {
            *acc += c;
        }
        if g.2.iter().sum::<usize>() >= opts.min_bin_count {
            groups.extend(open.take());
        }
    }
    if let Some(rest) = open {
        match groups.last_mut() {
            Some(last) => {
                last.1 = rest.1;
                for (acc, c) in last.2.iter_mut().zip(rest.2) {
                    *acc += c;
                }
            }
            None => groups.push(rest),
        }
    }

    let bins = groups
        .into_iter()
        .map(|(lower, upper, counts)| {
            let n: usize = counts.iter().sum();
            let probs = counts.iter().map(|&c| c as f64 / n as f64).collect();
            LookupBin { lower, upper, probs, count: n }
        })
        .collect();
    Ok(LookupTable { bins })
}

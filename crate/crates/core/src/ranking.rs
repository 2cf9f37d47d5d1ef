//! Multiclass random forest used to rank candidate predictors by mean
//! decrease in Gini impurity, and as a comparator classifier.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, DataTable, Schema};
use crate::error::{Result, ScoreError};
use crate::stats::stream_rng;

/// Exhaustive subset search is used up to this many levels at a node.
const MAX_EXHAUSTIVE_LEVELS: usize = 10;
/// Splits must reduce weighted impurity by more than this.
const MIN_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate variables per split; `None` means `floor(sqrt(p))`.
    pub mtry: Option<usize>,
    /// Minimum rows in each child of a split.
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    /// Grow each tree on a bootstrap resample; otherwise on all rows.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            mtry: None,
            min_node_size: 1,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Split {
    /// Go left when `x <= threshold`.
    Threshold(f64),
    /// Go left when the level's flag is set.
    Subset(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal {
        variable: usize,
        split: Split,
        left: usize,
        right: usize,
        decrease: f64,
    },
    Leaf {
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_classes: usize,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn leaf_for(&self, features: &[Feature], row: usize) -> &[usize] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Internal { variable, split, left, right, .. } => {
                    let go_left = match (&features[*variable], split) {
                        (Feature::Continuous(v), Split::Threshold(t)) => v[row] <= *t,
                        (Feature::Categorical { values, .. }, Split::Subset(mask)) => {
                            mask.get(values[row]).copied().unwrap_or(false)
                        }
                        _ => unreachable!("split kind follows feature kind"),
                    };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }

    /// Majority class (0-based) of the leaf reached by `row`.
    fn predict_row(&self, features: &[Feature], row: usize) -> usize {
        argmax_lowest(self.leaf_for(features, row))
    }

    pub fn leaf_count_total(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { counts } => counts.iter().sum(),
                Node::Internal { .. } => 0,
            })
            .sum()
    }
}

fn argmax_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
enum Feature {
    Continuous(Vec<f64>),
    Categorical { values: Vec<usize>, n_levels: usize },
}

fn features_of(table: &DataTable) -> Result<Vec<Feature>> {
    table
        .schema()
        .columns
        .iter()
        .zip(table.columns())
        .map(|(spec, col)| match (&spec.kind, col) {
            (ColumnKind::Continuous, Column::Continuous(v)) => v
                .iter()
                .map(|x| x.ok_or_else(|| ScoreError::validation(format!("missing value in '{}'", spec.name))))
                .collect::<Result<Vec<_>>>()
                .map(Feature::Continuous),
            (ColumnKind::Categorical { categories }, Column::Categorical(v)) => Ok(Feature::Categorical {
                values: v.clone(),
                n_levels: categories.len(),
            }),
            _ => unreachable!("validated table"),
        })
        .collect()
}

/// Weighted Gini "score": sum of squared class counts over node size.
/// Impurity decrease is `score(left) + score(right) - score(parent)`.
fn gini_score(sum_sq: f64, n: f64) -> f64 {
    if n > 0.0 {
        sum_sq / n
    } else {
        0.0
    }
}

struct BestSplit {
    variable: usize,
    split: Split,
    decrease: f64,
}

struct TreeBuilder<'a> {
    features: &'a [Feature],
    classes: &'a [usize],
    n_classes: usize,
    mtry: usize,
    min_node_size: usize,
    max_depth: usize,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl TreeBuilder<'_> {
    fn class_counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &r in rows {
            counts[self.classes[r]] += 1;
        }
        counts
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.class_counts(&rows);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: counts.clone() });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || rows.len() < 2 * self.min_node_size {
            return id;
        }

        let p = self.features.len();
        let mut candidates = sample(rng, p, self.mtry.min(p)).into_vec();
        candidates.sort_unstable();

        let parent_sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
        let parent_score = gini_score(parent_sq, rows.len() as f64);
        let mut best: Option<BestSplit> = None;
        for &v in &candidates {
            let found = match &self.features[v] {
                Feature::Continuous(x) => self.best_threshold(x, &rows, parent_score),
                Feature::Categorical { values, n_levels } => self.best_subset(values, *n_levels, &rows, parent_score),
            };
            if let Some((split, decrease)) = found {
                if decrease > MIN_DECREASE && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(BestSplit { variable: v, split, decrease });
                }
            }
        }

        let Some(best) = best else { return id };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| match (&self.features[best.variable], &best.split) {
            (Feature::Continuous(x), Split::Threshold(t)) => x[r] <= *t,
            (Feature::Categorical { values, .. }, Split::Subset(mask)) => mask[values[r]],
            _ => unreachable!(),
        });
        self.importance[best.variable] += best.decrease;
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[id] = Node::Internal {
            variable: best.variable,
            split: best.split,
            left,
            right,
            decrease: best.decrease,
        };
        id
    }

    fn best_threshold(&self, x: &[f64], rows: &[usize], parent_score: f64) -> Option<(Split, f64)> {
        let mut pairs: Vec<(f64, usize)> = rows.iter().map(|&r| (x[r], self.classes[r])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pairs.len();
        let mut left = vec![0usize; self.n_classes];
        let mut right = vec![0usize; self.n_classes];
        for &(_, c) in &pairs {
            right[c] += 1;
        }
        let mut left_sq = 0.0;
        let mut right_sq: f64 = right.iter().map(|&c| (c * c) as f64).sum();
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let c = pairs[i].1;
            left_sq += (2 * left[c] + 1) as f64;
            left[c] += 1;
            right_sq -= (2 * right[c] - 1) as f64;
            right[c] -= 1;
            let (a, b) = (pairs[i].0, pairs[i + 1].0);
            let n_left = i + 1;
            if a == b || n_left < self.min_node_size || n - n_left < self.min_node_size {
                continue;
            }
            let decrease = gini_score(left_sq, n_left as f64) + gini_score(right_sq, (n - n_left) as f64) - parent_score;
            if best.is_none_or(|(_, d)| decrease > d) {
                let mut t = a + (b - a) / 2.0;
                if t >= b {
                    t = a;
                }
                best = Some((t, decrease));
            }
        }
        best.map(|(t, d)| (Split::Threshold(t), d))
    }

    fn best_subset(&self, values: &[usize], n_levels: usize, rows: &[usize], parent_score: f64) -> Option<(Split, f64)> {
        let mut level_counts = vec![vec![0usize; self.n_classes]; n_levels];
        for &r in rows {
            level_counts[values[r]][self.classes[r]] += 1;
        }
        let mut present: Vec<usize> = (0..n_levels).filter(|&l| level_counts[l].iter().any(|&c| c > 0)).collect();
        if present.len() < 2 {
            return None;
        }
        let n = rows.len();
        let mut node_totals = vec![0usize; self.n_classes];
        for lc in &level_counts {
            for (acc, &c) in node_totals.iter_mut().zip(lc) {
                *acc += c;
            }
        }
        let evaluate = |left_levels: &[usize]| -> Option<f64> {
            let mut left = vec![0usize; self.n_classes];
            for &l in left_levels {
                for (acc, &c) in left.iter_mut().zip(&level_counts[l]) {
                    *acc += c;
                }
            }
            let n_left: usize = left.iter().sum();
            if n_left < self.min_node_size || n - n_left < self.min_node_size {
                return None;
            }
            let mut left_sq = 0.0;
            let mut right_sq = 0.0;
            for (k, &lc) in left.iter().enumerate() {
                let total = node_totals[k];
                left_sq += (lc * lc) as f64;
                right_sq += ((total - lc) * (total - lc)) as f64;
            }
            Some(gini_score(left_sq, n_left as f64) + gini_score(right_sq, (n - n_left) as f64) - parent_score)
        };

        let mut best: Option<(Vec<usize>, f64)> = None;
        let consider = |left_levels: Vec<usize>, best: &mut Option<(Vec<usize>, f64)>| {
            if let Some(d) = evaluate(&left_levels) {
                if best.as_ref().is_none_or(|(_, bd)| d > *bd) {
                    *best = Some((left_levels, d));
                }
            }
        };

        if present.len() <= MAX_EXHAUSTIVE_LEVELS {
            // The first present level always goes left, so each partition is seen once.
            let rest = present.len() - 1;
            for mask in 0..(1u32 << rest) - 1 {
                let mut left_levels = vec![present[0]];
                left_levels.extend((0..rest).filter(|b| mask & (1 << b) != 0).map(|b| present[b + 1]));
                consider(left_levels, &mut best);
            }
        } else {
            let majority = argmax_lowest(&node_totals);
            present.sort_by(|&a, &b| {
                let pa = level_counts[a][majority] as f64 / level_counts[a].iter().sum::<usize>() as f64;
                let pb = level_counts[b][majority] as f64 / level_counts[b].iter().sum::<usize>() as f64;
                pa.total_cmp(&pb).then(a.cmp(&b))
            });
            for cut in 1..present.len() {
                consider(present[..cut].to_vec(), &mut best);
            }
        }

        best.map(|(left_levels, d)| {
            let mut mask = vec![false; n_levels];
            for l in left_levels {
                mask[l] = true;
            }
            (Split::Subset(mask), d)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<DecisionTree>,
    params: ForestParams,
    mtry: usize,
    schema: Schema,
    /// Gini decrease per predictor, summed over every split of every tree.
    impurity_decrease: Vec<f64>,
}

impl Forest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    pub fn impurity_decrease(&self) -> &[f64] {
        &self.impurity_decrease
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }
}

pub fn train_forest(train: &DataTable, params: &ForestParams) -> Result<Forest> {
    if train.n_rows() == 0 {
        return Err(ScoreError::validation("empty training set"));
    }
    if params.n_trees == 0 {
        return Err(ScoreError::validation("forest needs at least one tree"));
    }
    if params.min_node_size == 0 {
        return Err(ScoreError::validation("min_node_size must be at least 1"));
    }
    let present = train.outcome().counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(ScoreError::Degenerate("training outcome has a single category".into()));
    }
    train.outcome().require_all_categories()?;

    let features = features_of(train)?;
    let p = features.len();
    if p == 0 {
        return Err(ScoreError::validation("no predictors to rank"));
    }
    let mtry = params.mtry.unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1));
    if mtry == 0 || mtry > p {
        return Err(ScoreError::validation(format!("mtry {mtry} outside 1..={p}")));
    }
    let classes: Vec<usize> = train.outcome().values().iter().map(|&y| y - 1).collect();
    let n = classes.len();
    let n_classes = train.outcome().n_categories();

    let grown: Vec<(DecisionTree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(params.seed, t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = TreeBuilder {
                features: &features,
                classes: &classes,
                n_classes,
                mtry,
                min_node_size: params.min_node_size,
                max_depth: params.max_depth.unwrap_or(usize::MAX),
                nodes: Vec::new(),
                importance: vec![0.0; p],
            };
            builder.build(rows, 0, &mut rng);
            (DecisionTree { nodes: builder.nodes, n_classes }, builder.importance)
        })
        .collect();

    let mut impurity_decrease = vec![0.0; p];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        for (acc, d) in impurity_decrease.iter_mut().zip(imp) {
            *acc += d;
        }
        trees.push(tree);
    }
    Ok(Forest {
        trees,
        params: params.clone(),
        mtry,
        schema: train.schema().clone(),
        impurity_decrease,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedVariable {
    pub variable: String,
    pub importance: f64,
}

/// Predictors in descending importance; ties keep schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub entries: Vec<RankedVariable>,
}

impl ImportanceRanking {
    pub fn variables(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.variable.clone()).collect()
    }

    pub fn top(&self, k: usize) -> Vec<String> {
        self.entries.iter().take(k).map(|e| e.variable.clone()).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["rank", "variable", "importance"])?;
        for (i, e) in self.entries.iter().enumerate() {
            wtr.write_record([(i + 1).to_string(), e.variable.clone(), e.importance.to_string()])?;
        }
        wtr.flush().map_err(|e| ScoreError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let variable = record.get(1).unwrap_or("").to_string();
            let importance: f64 = record
                .get(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ScoreError::validation("bad importance value in ranking file"))?;
            entries.push(RankedVariable { variable, importance });
        }
        Ok(ImportanceRanking { entries })
    }
}

/// Mean decrease in Gini impurity per predictor.
pub fn variable_importance(forest: &Forest) -> ImportanceRanking {
    let n_trees = forest.trees.len() as f64;
    let mut entries: Vec<RankedVariable> = forest
        .schema
        .columns
        .iter()
        .zip(&forest.impurity_decrease)
        .map(|(c, &d)| RankedVariable {
            variable: c.name.clone(),
            importance: d / n_trees,
        })
        .collect();
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    ImportanceRanking { entries }
}

/// Majority vote over trees, returning categories in `1..=J`. Ties go to
/// the lower category.
pub fn forest_predict(forest: &Forest, rows: &DataTable) -> Result<Vec<usize>> {
    if rows.schema().columns != forest.schema.columns {
        return Err(ScoreError::validation("rows do not match the forest's training schema"));
    }
    let features = features_of(rows)?;
    let n_classes = forest.schema.n_categories();
    let preds = (0..rows.n_rows())
        .into_par_iter()
        .map(|r| {
            let mut votes = vec![0usize; n_classes];
            for tree in &forest.trees {
                votes[tree.predict_row(&features, r)] += 1;
            }
            argmax_lowest(&votes) + 1
        })
        .collect();
    Ok(preds)
}

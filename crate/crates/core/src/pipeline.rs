//! Composition of the transform, fit and scorecard steps into one model build.

use serde::{Deserialize, Serialize};

use crate::data::DataTable;
use crate::error::Result;
use crate::link::Link;
use crate::pom::{fit_pom, refit_positive, FitOptions, PomFit};
use crate::scorecard::{derive_scorecard, ScoreCard};
use crate::transform::{apply_overrides, categorize, derive_cutoffs, prune_cutoffs, CutoffSpec, DEFAULT_PERCENTILES};

fn default_target() -> Option<f64> {
    Some(100.0)
}

fn default_grad_tol() -> f64 {
    FitOptions::default().grad_tol
}

fn default_max_iter() -> usize {
    FitOptions::default().max_iter
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub link: Link,
    /// `null` keeps the min-normalized points without rescaling.
    #[serde(default = "default_target")]
    pub max_total_target: Option<f64>,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            link: Link::default(),
            max_total_target: default_target(),
            grad_tol: default_grad_tol(),
            max_iter: default_max_iter(),
        }
    }
}

impl ModelConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            link: self.link,
            grad_tol: self.grad_tol,
            max_iter: self.max_iter,
        }
    }
}

fn default_percentiles() -> Vec<f64> {
    DEFAULT_PERCENTILES.to_vec()
}

fn default_min_bin_fraction() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
    /// Intervals holding less than this share of training rows are merged.
    #[serde(default = "default_min_bin_fraction")]
    pub min_bin_fraction: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            percentiles: default_percentiles(),
            min_bin_fraction: default_min_bin_fraction(),
        }
    }
}

/// Percentile cut-offs on `train`, pruned for sparse intervals, with
/// user overrides applied last.
pub fn prepare_cutoffs(train: &DataTable, cfg: &TransformConfig, overrides: Option<&CutoffSpec>) -> Result<CutoffSpec> {
    let derived = derive_cutoffs(train, &cfg.percentiles)?;
    let pruned = prune_cutoffs(&derived, train, cfg.min_bin_fraction)?;
    match overrides {
        Some(o) => apply_overrides(&pruned, o),
        None => Ok(pruned),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltModel {
    /// Fit with every coefficient non-negative.
    pub fit: PomFit,
    pub card: ScoreCard,
}

/// Categorize the chosen variables, fit, refit with positive references
/// and derive the integer card.
pub fn build_scorecard(train: &DataTable, variables: &[String], cutoffs: &CutoffSpec, cfg: &ModelConfig) -> Result<BuiltModel> {
    let opts = cfg.fit_options();
    let data = categorize(&train.select(variables)?, cutoffs)?;
    let fit = fit_pom(&data, &opts)?;
    let fit = refit_positive(&fit, &data, &opts)?;
    let card = derive_scorecard(&fit, cfg.max_total_target)?;
    Ok(BuiltModel { fit, card })
}

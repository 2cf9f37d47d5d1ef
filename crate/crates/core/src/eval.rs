//! Discrimination metrics for ordinal outcomes, bias-corrected bootstrap
//! intervals, and the parsimony curve used for variable selection.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataTable, OrdinalOutcome};
use crate::error::{Result, ScoreError};
use crate::pipeline::{build_scorecard, ModelConfig};
use crate::ranking::ImportanceRanking;
use crate::stats::{normal_cdf, normal_quantile, quantile_sorted, stream_rng};
use crate::transform::CutoffSpec;

/// Pair tallies over pairs from different classes, oriented so that a pair
/// is concordant when the higher class has the higher score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub concordant: u64,
    pub discordant: u64,
    pub tied: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.concordant + self.discordant + self.tied
    }

    /// `(C + T/2) / (C + D + T)`, or `None` without comparable pairs.
    pub fn concordance(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| (self.concordant as f64 + 0.5 * self.tied as f64) / total as f64)
    }
}

/// Scores sorted once, so several class assignments can be tallied in
/// `O(n * classes)` each after the `O(n log n)` sort.
struct RankedScores {
    order: Vec<usize>,
    /// Start offsets of runs of equal scores in `order`, plus `n`.
    group_starts: Vec<usize>,
}

impl RankedScores {
    fn new(scores: &[f64]) -> Result<Self> {
        if scores.iter().any(|s| s.is_nan()) {
            return Err(ScoreError::validation("scores contain NaN"));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let mut group_starts = vec![0];
        for i in 1..order.len() {
            if scores[order[i]] != scores[order[i - 1]] {
                group_starts.push(i);
            }
        }
        group_starts.push(order.len());
        Ok(RankedScores { order, group_starts })
    }

    /// `classes` are 0-based and below `n_classes`.
    fn pair_counts(&self, classes: &[usize], n_classes: usize) -> PairCounts {
        let mut below = vec![0u64; n_classes];
        let mut group = vec![0u64; n_classes];
        let mut out = PairCounts::default();
        for w in self.group_starts.windows(2) {
            group.iter_mut().for_each(|g| *g = 0);
            for &i in &self.order[w[0]..w[1]] {
                let c = classes[i];
                out.concordant += below[..c].iter().sum::<u64>();
                out.discordant += below[c + 1..].iter().sum::<u64>();
                group[c] += 1;
            }
            let m: u64 = group.iter().sum();
            let same: u64 = group.iter().map(|g| g * g).sum();
            out.tied += (m * m - same) / 2;
            for (b, g) in below.iter_mut().zip(&group) {
                *b += g;
            }
        }
        out
    }
}

fn check_lengths(scores: &[f64], n: usize) -> Result<()> {
    if scores.len() != n {
        return Err(ScoreError::validation(format!(
            "{} scores for {n} outcomes",
            scores.len()
        )));
    }
    Ok(())
}

/// Mann-Whitney AUC: the share of (positive, negative) pairs where the
/// positive scores higher, ties counting one half.
pub fn binary_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels.len())?;
    let classes: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    RankedScores::new(scores)?
        .pair_counts(&classes, 2)
        .concordance()
        .ok_or_else(|| ScoreError::Degenerate("AUC needs both classes".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanAuc {
    pub value: f64,
    /// AUC of `Y > j` against `Y <= j` for `j = 1..J-1`; `None` when a side
    /// is empty.
    pub per_split: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// Mean of the `J - 1` dichotomized AUCs; splits lacking a class are
/// skipped with a warning.
pub fn mean_auc(scores: &[f64], outcome: &OrdinalOutcome) -> Result<MeanAuc> {
    check_lengths(scores, outcome.len())?;
    let ranked = RankedScores::new(scores)?;
    let y = outcome.values();
    let mut per_split = Vec::new();
    let mut warnings = Vec::new();
    let mut classes = vec![0usize; y.len()];
    for j in 1..outcome.n_categories() {
        for (c, &v) in classes.iter_mut().zip(y) {
            *c = (v > j) as usize;
        }
        let auc = ranked.pair_counts(&classes, 2).concordance();
        if auc.is_none() {
            warnings.push(format!("split Y <= {j} vs Y > {j} lacks a class; skipped"));
        }
        per_split.push(auc);
    }
    let valid: Vec<f64> = per_split.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(ScoreError::Degenerate("no split has both classes".into()));
    }
    Ok(MeanAuc {
        value: valid.iter().sum::<f64>() / valid.len() as f64,
        per_split,
        warnings,
    })
}

/// Share of concordant pairs among pairs with different outcomes, score
/// ties counting one half.
pub fn generalized_c_index(scores: &[f64], outcome: &OrdinalOutcome) -> Result<f64> {
    check_lengths(scores, outcome.len())?;
    let classes: Vec<usize> = outcome.values().iter().map(|&v| v - 1).collect();
    RankedScores::new(scores)?
        .pair_counts(&classes, outcome.n_categories())
        .concordance()
        .ok_or_else(|| ScoreError::Degenerate("c-index needs two outcome categories".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Metric {
    #[default]
    #[serde(rename = "mauc")]
    MeanAuc,
    #[serde(rename = "c_index")]
    CIndex,
}

impl Metric {
    pub fn compute(self, scores: &[f64], outcome: &OrdinalOutcome) -> Result<f64> {
        match self {
            Metric::MeanAuc => mean_auc(scores, outcome).map(|m| m.value),
            Metric::CIndex => generalized_c_index(scores, outcome),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapMethod {
    #[default]
    Bc,
    /// Accepted in configs; computing it is not supported.
    Bca,
}

/// Degenerate resamples are redrawn at most this many times.
pub const MAX_REDRAWS: usize = 10;

fn default_b() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: BootstrapMethod,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            b: default_b(),
            alpha: default_alpha(),
            seed: 0,
            method: BootstrapMethod::Bc,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(ScoreError::validation("bootstrap B must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ScoreError::validation("bootstrap alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub b: usize,
    /// Replicates that produced a value.
    pub n_valid: usize,
    pub alpha: f64,
    pub z0: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Row indices of bootstrap replicate `replicate`, draw number `attempt`.
/// Every (replicate, attempt) pair has its own RNG stream.
pub fn resample_indices(n: usize, seed: u64, replicate: usize, attempt: usize) -> Vec<usize> {
    let stream = replicate as u64 * (MAX_REDRAWS as u64 + 1) + attempt as u64;
    let mut rng = stream_rng(seed, stream);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Type-7 quantiles of the replicates at `alpha/2` and `1 - alpha/2`.
pub fn percentile_interval(sorted: &[f64], alpha: f64) -> (f64, f64) {
    (quantile_sorted(sorted, alpha / 2.0), quantile_sorted(sorted, 1.0 - alpha / 2.0))
}

/// Bias constant `z0 = Phi^-1(#{theta* < theta_hat} / B)`, with the
/// proportion clipped to `[0.5/B, 1 - 0.5/B]`.
pub fn bias_constant(point: f64, replicates: &[f64]) -> f64 {
    let b = replicates.len();
    let below = replicates.iter().filter(|&&t| t < point).count();
    if 2 * below == b {
        return 0.0;
    }
    let bf = b as f64;
    let p = (below as f64 / bf).clamp(0.5 / bf, 1.0 - 0.5 / bf);
    normal_quantile(p)
}

/// BC interval from bootstrap replicates; returns `(lower, upper, z0)`.
pub fn bc_interval(point: f64, replicates: &[f64], alpha: f64) -> (f64, f64, f64) {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let z0 = bias_constant(point, &sorted);
    if z0 == 0.0 {
        let (lo, hi) = percentile_interval(&sorted, alpha);
        return (lo, hi, z0);
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let lo = quantile_sorted(&sorted, normal_cdf(2.0 * z0 - z));
    let hi = quantile_sorted(&sorted, normal_cdf(2.0 * z0 + z));
    (lo, hi, z0)
}

/// Bias-corrected percentile bootstrap of `metric` over (score, outcome)
/// pairs. A replicate whose metric fails is redrawn up to [`MAX_REDRAWS`]
/// times and then skipped.
pub fn bootstrap_ci<F>(metric: F, scores: &[f64], outcome: &OrdinalOutcome, cfg: &BootstrapConfig) -> Result<BootstrapCI>
where
    F: Fn(&[f64], &OrdinalOutcome) -> Result<f64> + Sync,
{
    cfg.validate()?;
    if cfg.method == BootstrapMethod::Bca {
        return Err(ScoreError::Unimplemented("BCa bootstrap intervals".into()));
    }
    check_lengths(scores, outcome.len())?;
    let point = metric(scores, outcome)?;
    let n = scores.len();
    let labels = outcome.labels().to_vec();
    let y = outcome.values();

    let draws: Vec<Option<(f64, usize)>> = (0..cfg.b)
        .into_par_iter()
        .map(|r| {
            (0..=MAX_REDRAWS).find_map(|attempt| {
                let idx = resample_indices(n, cfg.seed, r, attempt);
                let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
                let o = OrdinalOutcome::new(labels.clone(), idx.iter().map(|&i| y[i]).collect()).ok()?;
                metric(&s, &o).ok().map(|v| (v, attempt))
            })
        })
        .collect();

    let mut warnings = Vec::new();
    let redrawn = draws.iter().flatten().filter(|(_, a)| *a > 0).count();
    if redrawn > 0 {
        warnings.push(format!("{redrawn} degenerate resamples were redrawn"));
    }
    let skipped = draws.iter().filter(|d| d.is_none()).count();
    if skipped > 0 {
        warnings.push(format!("{skipped} resamples stayed degenerate after {MAX_REDRAWS} redraws and were skipped"));
    }
    let replicates: Vec<f64> = draws.into_iter().flatten().map(|(v, _)| v).collect();
    if replicates.is_empty() {
        return Err(ScoreError::Degenerate("every bootstrap resample was degenerate".into()));
    }
    let (lower, upper, z0) = bc_interval(point, &replicates, cfg.alpha);
    Ok(BootstrapCI {
        point,
        lower,
        upper,
        b: cfg.b,
        n_valid: replicates.len(),
        alpha: cfg.alpha,
        z0,
        seed: cfg.seed,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub n: usize,
    pub mauc: BootstrapCI,
    pub c_index: BootstrapCI,
    pub split_aucs: Vec<Option<f64>>,
}

/// mAUC and generalized c-index with BC intervals for one set of scores.
pub fn evaluate_scores(model: &str, scores: &[f64], outcome: &OrdinalOutcome, cfg: &BootstrapConfig) -> Result<ModelEvaluation> {
    let detail = mean_auc(scores, outcome)?;
    let mauc = bootstrap_ci(|s, o| Metric::MeanAuc.compute(s, o), scores, outcome, cfg)?;
    let c_index = bootstrap_ci(|s, o| Metric::CIndex.compute(s, o), scores, outcome, cfg)?;
    Ok(ModelEvaluation {
        model: model.to_string(),
        n: scores.len(),
        mauc,
        c_index,
        split_aucs: detail.per_split,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<ModelEvaluation>,
}

fn with_ci(ci: &BootstrapCI) -> String {
    format!("{:.3} ({:.3}, {:.3})", ci.point, ci.lower, ci.upper)
}

impl EvalReport {
    /// One row per model, with numeric columns and a formatted
    /// "estimate (lower, upper)" column per metric.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "model", "n", "mauc", "mauc_lower", "mauc_upper", "c_index", "c_index_lower", "c_index_upper", "mauc_95ci",
            "c_index_95ci",
        ])?;
        for m in &self.models {
            wtr.write_record([
                m.model.clone(),
                m.n.to_string(),
                m.mauc.point.to_string(),
                m.mauc.lower.to_string(),
                m.mauc.upper.to_string(),
                m.c_index.point.to_string(),
                m.c_index.lower.to_string(),
                m.c_index.upper.to_string(),
                with_ci(&m.mauc),
                with_ci(&m.c_index),
            ])?;
        }
        wtr.flush().map_err(|e| ScoreError::io("<csv writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsimonyPoint {
    pub k: usize,
    pub variable: String,
    pub mauc: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsimonyCurve {
    pub points: Vec<ParsimonyPoint>,
}

impl ParsimonyCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["k", "variable", "mAUC", "converged"])?;
        for p in &self.points {
            wtr.write_record([p.k.to_string(), p.variable.clone(), p.mauc.to_string(), p.converged.to_string()])?;
        }
        wtr.flush().map_err(|e| ScoreError::io("<csv writer>", e))?;
        Ok(())
    }

    /// Line plot of validation mAUC against the number of variables.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 60.0);
        let k_max = self.points.len().max(1) as f64;
        let finite = self.points.iter().map(|p| p.mauc).filter(|v| v.is_finite());
        let lo = finite.clone().fold(1.0f64, f64::min).min(0.5);
        let hi = finite.fold(0.0f64, f64::max).max(lo + 1e-9);
        let x = |k: f64| pad + (k - 1.0).max(0.0) / (k_max - 1.0).max(1.0) * (w - 2.0 * pad);
        let y = |v: f64| h - pad - (v - lo) / (hi - lo) * (h - 2.0 * pad);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
        );
        svg += &format!(
            "<line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n",
            b = h - pad,
            r = w - pad
        );
        svg += &format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">number of variables</text>\n<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">validation mAUC</text>\n",
            w / 2.0,
            h - 15.0,
            h / 2.0,
            h / 2.0
        );
        for v in [lo, (lo + hi) / 2.0, hi] {
            svg += &format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>\n", pad - 5.0, y(v) + 4.0);
        }
        let pts: Vec<String> = self
            .points
            .iter()
            .filter(|p| p.mauc.is_finite())
            .map(|p| format!("{:.1},{:.1}", x(p.k as f64), y(p.mauc)))
            .collect();
        svg += &format!("<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n", pts.join(" "));
        for p in self.points.iter().filter(|p| p.mauc.is_finite()) {
            let (px, py) = (x(p.k as f64), y(p.mauc));
            svg += &format!("<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"3\" fill=\"steelblue\"><title>{}: {:.4}</title></circle>\n", xml_escape(&p.variable), p.mauc);
            svg += &format!("<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n", h - pad + 15.0, p.k);
        }
        svg += "</svg>\n";
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Validation mAUC of the integer scorecard built from the top `k` ranked
/// variables, for `k = 1..=max_k` (all ranked variables by default).
pub fn parsimony_curve(
    ranking: &ImportanceRanking,
    train: &DataTable,
    validation: &DataTable,
    cutoffs: &CutoffSpec,
    cfg: &ModelConfig,
    max_k: Option<usize>,
) -> Result<ParsimonyCurve> {
    let ranked = ranking.variables();
    if ranked.is_empty() {
        return Err(ScoreError::validation("ranking is empty"));
    }
    let k_max = max_k.unwrap_or(ranked.len()).min(ranked.len());
    let points = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let vars = &ranked[..k];
            let (scores, converged, note) = match build_scorecard(train, vars, cutoffs, cfg) {
                Ok(model) => {
                    let scores = model.card.score_data(&validation.select(&model.card.variable_names())?)?;
                    (scores.iter().map(|&s| s as f64).collect(), model.fit.converged(), None)
                }
                Err(ScoreError::Degenerate(msg)) => (vec![0.0; validation.n_rows()], false, Some(msg)),
                Err(e) => return Err(e),
            };
            let mauc = mean_auc(&scores, validation.outcome())?.value;
            Ok(ParsimonyPoint {
                k,
                variable: ranked[k - 1].clone(),
                mauc,
                converged,
                note,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParsimonyCurve { points })
}

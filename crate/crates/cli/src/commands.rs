//! One function per pipeline stage. Each reads its declared inputs, writes
//! its artifacts into the output directory and records them in the manifest.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use ordscore_core::data::{
    impute, load_csv, plan_imputation, stratified_split, write_csv, DataTable, ImputationPlan, SplitIndices, SplitName,
    SyntheticSpec,
};
use ordscore_core::eval::{evaluate_scores, parsimony_curve, EvalReport, ParsimonyCurve};
use ordscore_core::pipeline::{build_scorecard, prepare_cutoffs, BuiltModel};
use ordscore_core::pom::PomFit;
use ordscore_core::ranking::{forest_predict, train_forest, variable_importance, ImportanceRanking};
use ordscore_core::scorecard::{build_lookup, LookupTable, ScoreCard};
use ordscore_core::transform::{categorize, CutoffSpec};
use ordscore_core::{Result, ScoreError};

use crate::config::LoadedConfig;
use crate::manifest::{sha256_hex, StageWriter};
use crate::simulate::{independence_checks, IndependenceCheck};

pub const SPLITS: &str = "splits.csv";
pub const IMPUTATION: &str = "imputation.json";
pub const RANKING: &str = "ranking.csv";
pub const PARSIMONY_CSV: &str = "parsimony.csv";
pub const PARSIMONY_SVG: &str = "parsimony.svg";
pub const CUTOFFS: &str = "cutoffs.json";
pub const POM_FIT: &str = "pom_fit.json";
pub const SCORECARD_JSON: &str = "scorecard.json";
pub const SCORECARD_CSV: &str = "scorecard.csv";
pub const LOOKUP: &str = "lookup.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

pub fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| ScoreError::io(path, e))
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Path of an earlier stage's artifact, or an error naming that stage.
fn require(cfg: &LoadedConfig, name: &str, stage: &str) -> Result<PathBuf> {
    let path = cfg.artifact(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(ScoreError::validation(format!(
            "{} not found; run `ordscore {stage}` first",
            path.display()
        )))
    }
}

fn load_data(cfg: &LoadedConfig, stage: &mut StageWriter) -> Result<DataTable> {
    stage.input(&cfg.config.data)?;
    stage.input(&cfg.config.schema)?;
    load_csv(&cfg.config.data, &cfg.schema)
}

/// Imputed train, validation and test tables.
pub struct Prepared {
    pub train: DataTable,
    pub validation: DataTable,
    pub test: DataTable,
}

impl Prepared {
    pub fn get(&self, split: SplitName) -> &DataTable {
        match split {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

fn prepare(cfg: &LoadedConfig, stage: &mut StageWriter) -> Result<Prepared> {
    let data = load_data(cfg, stage)?;
    let splits_path = require(cfg, SPLITS, "split")?;
    let plan_path = require(cfg, IMPUTATION, "split")?;
    stage.input(&splits_path)?;
    stage.input(&plan_path)?;
    let file = std::fs::File::open(&splits_path).map_err(|e| ScoreError::io(&splits_path, e))?;
    let split = SplitIndices::read_csv(file, cfg.config.split.seed)?;
    if split.n_rows() != data.n_rows() {
        return Err(ScoreError::validation(format!(
            "{SPLITS} covers {} rows but the data has {}; rerun `ordscore split`",
            split.n_rows(),
            data.n_rows()
        )));
    }
    let plan: ImputationPlan = serde_json::from_str(&read_text(&plan_path)?)?;
    let part = |s: SplitName| impute(&data.subset(split.get(s)), &plan);
    Ok(Prepared {
        train: part(SplitName::Train)?,
        validation: part(SplitName::Validation)?,
        test: part(SplitName::Test)?,
    })
}

fn read_ranking(cfg: &LoadedConfig, stage: &mut StageWriter) -> Result<ImportanceRanking> {
    let path = require(cfg, RANKING, "rank")?;
    stage.input(&path)?;
    ImportanceRanking::read_csv(std::fs::File::open(&path).map_err(|e| ScoreError::io(&path, e))?)
}

pub fn cmd_split(cfg: &LoadedConfig) -> Result<SplitIndices> {
    let mut stage = StageWriter::new(cfg.out_dir(), "split")?;
    let data = load_data(cfg, &mut stage)?;
    let split = stratified_split(&data, cfg.config.split.ratios, cfg.config.split.seed)?;
    let plan = plan_imputation(&data, &split, cfg.config.imputation.reference)?;
    stage.output(SPLITS, &csv_bytes(|b| split.write_csv(b))?)?;
    stage.output(IMPUTATION, &json_bytes(&plan)?)?;
    stage.finish(&cfg.raw)?;
    Ok(split)
}

pub fn cmd_rank(cfg: &LoadedConfig) -> Result<ImportanceRanking> {
    let mut stage = StageWriter::new(cfg.out_dir(), "rank")?;
    let data = prepare(cfg, &mut stage)?;
    let forest = train_forest(&data.train, &cfg.config.forest)?;
    let ranking = variable_importance(&forest);
    stage.output(RANKING, &csv_bytes(|b| ranking.write_csv(b))?)?;
    stage.finish(&cfg.raw)?;
    Ok(ranking)
}

pub fn cmd_parsimony(cfg: &LoadedConfig) -> Result<ParsimonyCurve> {
    let mut stage = StageWriter::new(cfg.out_dir(), "parsimony")?;
    let data = prepare(cfg, &mut stage)?;
    let ranking = read_ranking(cfg, &mut stage)?;
    let cutoffs = prepare_cutoffs(&data.train, &cfg.config.transform, None)?;
    let curve = parsimony_curve(
        &ranking,
        &data.train,
        &data.validation,
        &cutoffs,
        &cfg.config.model,
        cfg.config.parsimony.max_k,
    )?;
    for p in curve.points.iter().filter(|p| !p.converged) {
        warn(format!("parsimony model with {} variables did not converge", p.k));
    }
    stage.output(PARSIMONY_CSV, &csv_bytes(|b| curve.write_csv(b))?)?;
    stage.output(PARSIMONY_SVG, curve.to_svg().as_bytes())?;
    stage.finish(&cfg.raw)?;
    Ok(curve)
}

fn model_variables(cfg: &LoadedConfig, stage: &mut StageWriter) -> Result<Vec<String>> {
    if let Some(vars) = &cfg.config.selected_variables {
        return Ok(vars.clone());
    }
    let Some(k) = cfg.config.top_k else {
        return Err(ScoreError::validation("set selected_variables or top_k in the config"));
    };
    let ranking = read_ranking(cfg, stage)?;
    if k > ranking.entries.len() {
        return Err(ScoreError::validation(format!(
            "top_k = {k} exceeds the {} ranked variables",
            ranking.entries.len()
        )));
    }
    Ok(ranking.top(k))
}

fn build_stage(cfg: &LoadedConfig, name: &'static str, overrides: Option<(&Path, CutoffSpec)>) -> Result<BuiltModel> {
    let mut stage = StageWriter::new(cfg.out_dir(), name)?;
    let data = prepare(cfg, &mut stage)?;
    let vars = model_variables(cfg, &mut stage)?;
    if let Some((path, _)) = &overrides {
        stage.input(path)?;
    }
    let cutoffs = prepare_cutoffs(&data.train, &cfg.config.transform, overrides.as_ref().map(|(_, o)| o))?;
    let mut model = build_scorecard(&data.train, &vars, &cutoffs, &cfg.config.model)?;
    for w in &model.fit.diagnostics.warnings {
        warn(w);
    }
    if !model.fit.converged() {
        warn("the positive refit did not reach the gradient tolerance");
    }
    let fit_json = json_bytes(&model.fit)?;
    model.card.provenance.fit_digest = Some(sha256_hex(&fit_json));
    let train_scores = model.card.score_data(&data.train.select(&model.card.variable_names())?)?;
    let lookup = build_lookup(&model.card, &train_scores, data.train.outcome(), &cfg.config.lookup)?;

    stage.output(CUTOFFS, &json_bytes(&cutoffs)?)?;
    stage.output(POM_FIT, &fit_json)?;
    stage.output(SCORECARD_JSON, &json_bytes(&model.card)?)?;
    stage.output(SCORECARD_CSV, &csv_bytes(|b| model.card.write_csv(b))?)?;
    stage.output(LOOKUP, &csv_bytes(|b| lookup.write_csv(b))?)?;
    stage.finish(&cfg.raw)?;
    Ok(model)
}

pub fn cmd_build(cfg: &LoadedConfig) -> Result<BuiltModel> {
    build_stage(cfg, "build", None)
}

/// Reads a cut-off override file; an empty file means no overrides.
pub fn read_overrides(path: &Path) -> Result<CutoffSpec> {
    let text = read_text(path)?;
    if text.trim().is_empty() {
        return Ok(CutoffSpec::default());
    }
    let spec: CutoffSpec = serde_json::from_str(&text)?;
    spec.validate()?;
    Ok(spec)
}

/// Rebuilds the scorecard with cut-offs replaced from `overrides`, or the
/// config's override file.
pub fn cmd_finetune(cfg: &LoadedConfig, overrides: Option<&Path>) -> Result<BuiltModel> {
    let path = overrides
        .map(Path::to_path_buf)
        .or_else(|| cfg.config.overrides.clone())
        .ok_or_else(|| ScoreError::validation("finetune needs --overrides or an overrides path in the config"))?;
    let spec = read_overrides(&path)?;
    build_stage(cfg, "finetune", Some((&path, spec)))
}

fn read_card(path: &Path) -> Result<ScoreCard> {
    let card: ScoreCard = serde_json::from_str(&read_text(path)?)?;
    card.validate()?;
    for v in &card.variables {
        if let (Some(cuts), Some(recorded)) = (&v.cutoffs, card.provenance.cutoffs.get(&v.name)) {
            if cuts.as_slice() != recorded {
                return Err(ScoreError::validation(format!(
                    "scorecard cut-offs for '{}' disagree with its provenance",
                    v.name
                )));
            }
        }
    }
    Ok(card)
}

pub fn cmd_evaluate(cfg: &LoadedConfig, pom: bool, forest: bool) -> Result<EvalReport> {
    let mut stage = StageWriter::new(cfg.out_dir(), "evaluate")?;
    let data = prepare(cfg, &mut stage)?;
    let card_path = require(cfg, SCORECARD_JSON, "build")?;
    stage.input(&card_path)?;
    let card = read_card(&card_path)?;
    let vars = card.variable_names();
    let test = data.test.select(&vars)?;
    let boot = &cfg.config.bootstrap;

    let scores: Vec<f64> = card.score_data(&test)?.into_iter().map(|s| s as f64).collect();
    let mut models = vec![evaluate_scores("scorecard", &scores, test.outcome(), boot)?];

    if pom {
        let fit_path = require(cfg, POM_FIT, "build")?;
        stage.input(&fit_path)?;
        let fit: PomFit = serde_json::from_str(&read_text(&fit_path)?)?;
        let cutoffs = CutoffSpec {
            cutoffs: fit
                .variables
                .iter()
                .filter_map(|v| v.cutoffs.clone().map(|c| (v.name.clone(), c)))
                .collect(),
        };
        let names: Vec<String> = fit.variables.iter().map(|v| v.name.clone()).collect();
        let eta = fit.linear_predictors(&categorize(&data.test.select(&names)?, &cutoffs)?)?;
        models.push(evaluate_scores("pom", &eta, test.outcome(), boot)?);
    }
    if forest {
        let rf = train_forest(&data.train.select(&vars)?, &cfg.config.forest)?;
        let predicted: Vec<f64> = forest_predict(&rf, &test)?.into_iter().map(|c| c as f64).collect();
        models.push(evaluate_scores("forest", &predicted, test.outcome(), boot)?);
    }
    for m in &models {
        for w in m.mauc.warnings.iter().chain(&m.c_index.warnings) {
            warn(format!("{}: {w}", m.model));
        }
    }
    let report = EvalReport { models };
    stage.output(REPORT_JSON, &json_bytes(&report)?)?;
    stage.output(REPORT_CSV, &csv_bytes(|b| report.write_csv(b))?)?;
    stage.finish(&cfg.raw)?;
    Ok(report)
}

/// Every stage in order; `finetune` runs only when the config names an
/// override file.
pub fn cmd_run(cfg: &LoadedConfig, pom: bool, forest: bool) -> Result<EvalReport> {
    cmd_split(cfg)?;
    cmd_rank(cfg)?;
    cmd_parsimony(cfg)?;
    cmd_build(cfg)?;
    if cfg.config.overrides.is_some() {
        cmd_finetune(cfg, None)?;
    }
    cmd_evaluate(cfg, pom, forest)
}

pub struct PredictArgs<'a> {
    pub card: &'a Path,
    pub lookup: &'a Path,
    pub input: &'a Path,
    pub imputation: Option<&'a Path>,
    /// Columns allowed in the input besides the card's variables.
    pub extra_columns: &'a [String],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub total_score: i64,
    pub probs: Vec<f64>,
}

/// Scores new rows with a scorecard and reads their probabilities from the
/// lookup table. Writes the input columns plus `total_score,p_1..p_J`.
pub fn cmd_predict<W: Write>(args: &PredictArgs, out: W) -> Result<Vec<Prediction>> {
    let card = read_card(args.card)?;
    let lookup = LookupTable::read_csv(std::fs::File::open(args.lookup).map_err(|e| ScoreError::io(args.lookup, e))?)?;
    if lookup.n_categories() != card.outcome_labels.len() {
        return Err(ScoreError::validation("lookup table and scorecard disagree on the number of outcome categories"));
    }
    let (first, last) = (&lookup.bins[0], &lookup.bins[lookup.bins.len() - 1]);
    if first.lower != 0 || last.upper != card.max_total {
        return Err(ScoreError::validation(format!(
            "lookup table covers [{}, {}] but the scorecard ranges over [0, {}]",
            first.lower, last.upper, card.max_total
        )));
    }
    let plan: Option<ImputationPlan> = args.imputation.map(|p| Ok::<_, ScoreError>(serde_json::from_str(&read_text(p)?)?)).transpose()?;

    let file = std::fs::File::open(args.input).map_err(|e| ScoreError::io(args.input, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let names = card.variable_names();
    for h in headers.iter() {
        if !names.iter().any(|n| n == h) && !args.extra_columns.iter().any(|n| n == h) {
            return Err(ScoreError::validation(format!("input column '{h}' is not a scorecard variable")));
        }
    }
    let positions = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| ScoreError::validation(format!("input lacks scorecard variable '{n}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let fills: HashMap<&str, f64> = plan
        .as_ref()
        .map(|p| p.fills.iter().map(|(k, v)| (k.as_str(), *v)).collect())
        .unwrap_or_default();

    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = headers.iter().map(str::to_string).collect();
    header.push("total_score".into());
    header.extend((1..=lookup.n_categories()).map(|j| format!("p_{j}")));
    wtr.write_record(&header)?;

    let mut predictions = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let cells = positions
            .iter()
            .zip(&card.variables)
            .map(|(&i, v)| {
                let cell = record.get(i).unwrap_or("").trim();
                if !cell.is_empty() {
                    return Ok(cell.to_string());
                }
                match (v.cutoffs.is_some(), fills.get(v.name.as_str())) {
                    (true, Some(fill)) => Ok(fill.to_string()),
                    _ => Err(ScoreError::Cell {
                        row: row + 1,
                        column: v.name.clone(),
                        message: "missing value with no imputation entry".into(),
                    }),
                }
            })
            .collect::<Result<Vec<String>>>()?;
        let codes = card
            .variables
            .iter()
            .zip(&cells)
            .map(|(v, c)| {
                v.level_of(c).map_err(|e| ScoreError::Cell {
                    row: row + 1,
                    column: v.name.clone(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let total_score = card.total_score_codes(&codes)?;
        let probs = lookup.predict_probs(total_score)?.to_vec();
        let mut rec: Vec<String> = record.iter().map(str::to_string).collect();
        rec.push(total_score.to_string());
        rec.extend(probs.iter().map(|p| p.to_string()));
        wtr.write_record(&rec)?;
        predictions.push(Prediction { total_score, probs });
    }
    wtr.flush().map_err(|e| ScoreError::io("<output>", e))?;
    Ok(predictions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub rows: usize,
    pub outcome_counts: Vec<usize>,
    pub independence: Vec<IndependenceCheck>,
}

/// Generates a synthetic dataset from a JSON spec and checks that
/// zero-effect predictors look independent of the outcome.
pub fn cmd_simulate(spec_path: &Path, out: &Path, schema_out: Option<&Path>) -> Result<SimulationSummary> {
    let spec: SyntheticSpec = serde_json::from_str(&read_text(spec_path)?)
        .map_err(|e| ScoreError::validation(format!("spec {}: {e}", spec_path.display())))?;
    spec.validate()?;
    let table = ordscore_core::data::generate_synthetic(&spec)?;
    let bytes = csv_bytes(|b| write_csv(&table, b))?;
    std::fs::write(out, bytes).map_err(|e| ScoreError::io(out, e))?;
    if let Some(path) = schema_out {
        std::fs::write(path, json_bytes(&spec.schema())?).map_err(|e| ScoreError::io(path, e))?;
    }
    let zero: Vec<String> = spec.all_predictors().into_iter().filter(|p| p.beta == 0.0).map(|p| p.name).collect();
    let independence = independence_checks(&table, &zero)?;
    for c in independence.iter().filter(|c| c.flagged) {
        warn(format!(
            "'{}' has zero effect but chi-square = {:.2} on {} df (p = {:.2e})",
            c.variable, c.statistic, c.df, c.p_value
        ));
    }
    Ok(SimulationSummary {
        rows: table.n_rows(),
        outcome_counts: table.outcome().counts(),
        independence,
    })
}

/// Output digests recorded in a manifest, by artifact name.
pub fn artifact_digests(out_dir: &Path) -> Result<BTreeMap<String, String>> {
    crate::manifest::RunManifest::load_or_new(out_dir).map(|m| m.output_digests())
}

//! Maximum-likelihood fitting of the proportional odds (cumulative link)
//! model
//!
//! ```text
//! F^-1(P(Y <= j)) = theta_j - x'beta,   j = 1..J-1
//! ```
//!
//! on dummy-coded categorical predictors. A positive coefficient shifts
//! mass towards higher outcome categories.
//!
//! The optimizer works on `(theta_1, gamma_2, .., gamma_{J-1}, beta)` with
//! `theta_j = theta_1 + sum_{k=2..j} exp(gamma_k)`, so every iterate has
//! strictly increasing intercepts. Steps are damped Newton with step
//! halving.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScoreError};
use crate::link::Link;
use crate::transform::CategorizedTable;

/// Coefficients larger than this in magnitude are reported as separation.
pub const SEPARATION_THRESHOLD: f64 = 30.0;
/// Negative coefficients down to this value are clamped to zero after the
/// positive refit.
pub const CLAMP_TOLERANCE: f64 = 1e-8;
const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub link: Link,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            link: Link::Logit,
            grad_tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// One predictor's levels and fitted effects. The reference level's effect
/// is zero; so is the effect of any level with no training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PomVariable {
    pub name: String,
    pub levels: Vec<String>,
    pub reference: usize,
    pub coefficients: Vec<f64>,
    /// Levels that received a free parameter.
    pub estimated: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<f64>>,
}

impl PomVariable {
    pub fn reference_label(&self) -> &str {
        &self.levels[self.reference]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub log_likelihood: f64,
    pub converged: bool,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub separation: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PomFit {
    pub link: Link,
    pub theta: Vec<f64>,
    pub variables: Vec<PomVariable>,
    pub outcome_labels: Vec<String>,
    pub diagnostics: FitDiagnostics,
}

impl PomFit {
    pub fn n_categories(&self) -> usize {
        self.theta.len() + 1
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    pub fn log_likelihood_value(&self) -> f64 {
        self.diagnostics.log_likelihood
    }

    /// `variable -> reference label`.
    pub fn references(&self) -> BTreeMap<String, String> {
        self.variables
            .iter()
            .map(|v| (v.name.clone(), v.reference_label().to_string()))
            .collect()
    }

    /// `variable -> level -> coefficient` for non-reference levels.
    pub fn coefficient_map(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        self.variables
            .iter()
            .map(|v| {
                let inner = v
                    .levels
                    .iter()
                    .zip(&v.coefficients)
                    .enumerate()
                    .filter(|(i, _)| *i != v.reference)
                    .map(|(_, (l, &c))| (l.clone(), c))
                    .collect();
                (v.name.clone(), inner)
            })
            .collect()
    }

    /// `x'beta` for a row given as level codes aligned with `variables`.
    pub fn linear_predictor_codes(&self, codes: &[usize]) -> f64 {
        self.variables
            .iter()
            .zip(codes)
            .map(|(v, &c)| v.coefficients[c])
            .sum()
    }

    /// `x'beta` for a row given as level labels aligned with `variables`.
    pub fn linear_predictor(&self, labels: &[&str]) -> Result<f64> {
        if labels.len() != self.variables.len() {
            return Err(ScoreError::validation(format!(
                "row has {} values, model has {} variables",
                labels.len(),
                self.variables.len()
            )));
        }
        let mut eta = 0.0;
        for (v, label) in self.variables.iter().zip(labels) {
            let i = v
                .levels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| ScoreError::validation(format!("unseen level '{label}' for '{}'", v.name)))?;
            eta += v.coefficients[i];
        }
        Ok(eta)
    }

    /// Level codes of `data` translated into this fit's level indices.
    pub fn encode(&self, data: &CategorizedTable) -> Result<Vec<Vec<usize>>> {
        let mut maps = Vec::with_capacity(self.variables.len());
        for v in &self.variables {
            let dv = data
                .variable(&v.name)
                .ok_or_else(|| ScoreError::validation(format!("data lacks variable '{}'", v.name)))?;
            let map: Vec<Option<usize>> = dv
                .levels
                .iter()
                .map(|l| v.levels.iter().position(|m| m == l))
                .collect();
            maps.push((dv, map));
        }
        (0..data.n_rows())
            .map(|r| {
                maps.iter()
                    .zip(&self.variables)
                    .map(|((dv, map), v)| {
                        let code = dv.codes[r];
                        map[code].ok_or_else(|| {
                            ScoreError::validation(format!("unseen level '{}' for '{}'", dv.levels[code], v.name))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    pub fn linear_predictors(&self, data: &CategorizedTable) -> Result<Vec<f64>> {
        Ok(self.encode(data)?.iter().map(|c| self.linear_predictor_codes(c)).collect())
    }

    /// `P(Y <= j)` for `j = 1..J`; the last entry is 1.
    pub fn cumulative_probs(&self, eta: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.theta.iter().map(|&t| self.link.cdf(t - eta)).collect();
        out.push(1.0);
        out
    }

    /// `P(Y = j)` for `j = 1..J`.
    pub fn category_probs(&self, eta: f64) -> Vec<f64> {
        let cum = self.cumulative_probs(eta);
        let mut prev = 0.0;
        cum.iter()
            .map(|&c| {
                let p = (c - prev).max(0.0);
                prev = c;
                p
            })
            .collect()
    }

    /// Probability of observing category `y` (1-based) at linear predictor `eta`.
    pub fn observed_prob(&self, y: usize, eta: f64) -> f64 {
        let j = self.theta.len() + 1;
        let upper = if y < j { self.theta[y - 1] - eta } else { f64::INFINITY };
        let lower = if y > 1 { self.theta[y - 2] - eta } else { f64::NEG_INFINITY };
        self.link.interval_prob(lower, upper)
    }

    /// Optimizer coordinates `(theta_1, log-gaps, free betas)` of this fit.
    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![self.theta[0]];
        p.extend(self.theta.windows(2).map(|w| (w[1] - w[0]).ln()));
        for v in &self.variables {
            for (i, &c) in v.coefficients.iter().enumerate() {
                if v.estimated[i] {
                    p.push(c);
                }
            }
        }
        p
    }

    /// The log-likelihood surface of `data` under this fit's coding.
    pub fn surface(&self, data: &CategorizedTable) -> Result<LikelihoodSurface> {
        let codes = self.encode(data)?;
        let layout = Layout::from_variables(&self.variables);
        Ok(LikelihoodSurface::new(&layout, &codes, data.outcome.values(), self.theta.len(), self.link))
    }
}

pub fn log_likelihood(fit: &PomFit, data: &CategorizedTable) -> Result<f64> {
    let etas = fit.linear_predictors(data)?;
    Ok(etas
        .iter()
        .zip(data.outcome.values())
        .map(|(&eta, &y)| fit.observed_prob(y, eta).max(PROB_FLOOR).ln())
        .sum())
}

/// Parameter index of each (variable, level), `None` for fixed-zero levels.
struct Layout {
    index: Vec<Vec<Option<usize>>>,
    n_beta: usize,
}

impl Layout {
    fn from_variables(variables: &[PomVariable]) -> Self {
        let mut n_beta = 0;
        let index = variables
            .iter()
            .map(|v| {
                v.estimated
                    .iter()
                    .map(|&e| {
                        e.then(|| {
                            n_beta += 1;
                            n_beta - 1
                        })
                    })
                    .collect()
            })
            .collect();
        Layout { index, n_beta }
    }
}

/// Rows with identical active coefficients and outcome, aggregated.
#[derive(Debug, Clone)]
struct Pattern {
    active: Vec<usize>,
    y: usize,
    weight: f64,
}

/// Log-likelihood of the cumulative link model with its analytic gradient
/// and Hessian, in optimizer coordinates.
#[derive(Debug, Clone)]
pub struct LikelihoodSurface {
    patterns: Vec<Pattern>,
    n_theta: usize,
    n_beta: usize,
    link: Link,
}

struct Evaluation {
    value: f64,
    gradient: DVector<f64>,
    hessian: Option<DMatrix<f64>>,
}

impl LikelihoodSurface {
    fn new(layout: &Layout, codes: &[Vec<usize>], y: &[usize], n_theta: usize, link: Link) -> Self {
        let mut groups: BTreeMap<(Vec<usize>, usize), usize> = BTreeMap::new();
        for (row, &yi) in codes.iter().zip(y) {
            let active: Vec<usize> = row
                .iter()
                .zip(&layout.index)
                .filter_map(|(&c, idx)| idx[c])
                .collect();
            *groups.entry((active, yi)).or_insert(0) += 1;
        }
        let patterns = groups
            .into_iter()
            .map(|((active, y), w)| Pattern { active, y, weight: w as f64 })
            .collect();
        LikelihoodSurface {
            patterns,
            n_theta,
            n_beta: layout.n_beta,
            link,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_theta + self.n_beta
    }

    pub fn thetas(&self, params: &[f64]) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n_theta);
        let mut acc = params[0];
        theta.push(acc);
        for &g in &params[1..self.n_theta] {
            acc += g.exp();
            theta.push(acc);
        }
        theta
    }

    pub fn log_likelihood(&self, params: &[f64]) -> f64 {
        self.evaluate(params, false).value
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        self.evaluate(params, false).gradient.iter().copied().collect()
    }

    pub fn hessian(&self, params: &[f64]) -> DMatrix<f64> {
        self.evaluate(params, true).hessian.expect("requested")
    }

    fn evaluate(&self, params: &[f64], with_hessian: bool) -> Evaluation {
        let k = self.n_theta;
        let dim = self.n_params();
        let theta = self.thetas(params);
        let beta = &params[k..];
        let link = self.link;

        let mut value = 0.0;
        let mut g = DVector::<f64>::zeros(dim);
        let mut h = with_hessian.then(|| DMatrix::<f64>::zeros(dim, dim));

        for pat in &self.patterns {
            let eta: f64 = pat.active.iter().map(|&i| beta[i]).sum();
            let w = pat.weight;
            let upper = (pat.y <= k).then(|| theta[pat.y - 1] - eta);
            let lower = (pat.y >= 2).then(|| theta[pat.y - 2] - eta);
            let prob = link
                .interval_prob(lower.unwrap_or(f64::NEG_INFINITY), upper.unwrap_or(f64::INFINITY))
                .max(PROB_FLOOR);
            value += w * prob.ln();

            let (fa, dfa) = upper.map_or((0.0, 0.0), |a| (link.pdf(a), link.pdf_deriv(a)));
            let (fb, dfb) = lower.map_or((0.0, 0.0), |b| (link.pdf(b), link.pdf_deriv(b)));
            let la = fa / prob;
            let lb = -fb / prob;
            let lbeta = -(la + lb);

            let ia = upper.map(|_| pat.y - 1);
            let ib = lower.map(|_| pat.y - 2);
            if let Some(i) = ia {
                g[i] += w * la;
            }
            if let Some(i) = ib {
                g[i] += w * lb;
            }
            for &j in &pat.active {
                g[k + j] += w * lbeta;
            }

            if let Some(h) = h.as_mut() {
                let laa = dfa / prob - la * la;
                let lbb = -dfb / prob - lb * lb;
                let lab = fa * fb / (prob * prob);
                if let Some(i) = ia {
                    h[(i, i)] += w * laa;
                    for &j in &pat.active {
                        h[(i, k + j)] -= w * (laa + lab);
                        h[(k + j, i)] -= w * (laa + lab);
                    }
                }
                if let Some(i) = ib {
                    h[(i, i)] += w * lbb;
                    for &j in &pat.active {
                        h[(i, k + j)] -= w * (lab + lbb);
                        h[(k + j, i)] -= w * (lab + lbb);
                    }
                }
                if let (Some(a), Some(b)) = (ia, ib) {
                    h[(a, b)] += w * lab;
                    h[(b, a)] += w * lab;
                }
                let lbb_total = w * (laa + 2.0 * lab + lbb);
                for &j in &pat.active {
                    for &l in &pat.active {
                        h[(k + j, k + l)] += lbb_total;
                    }
                }
            }
        }

        // Chain rule from natural intercepts to (theta_1, gamma_2, ..).
        let gaps: Vec<f64> = params[1..k].iter().map(|g| g.exp()).collect();
        let mut jac = DMatrix::<f64>::identity(dim, dim);
        for row in 0..k {
            jac[(row, 0)] = 1.0;
            for col in 1..k {
                jac[(row, col)] = if col <= row { gaps[col - 1] } else { 0.0 };
            }
        }
        // Tail sums of the natural theta gradient, before transforming it.
        let mut tail = vec![0.0; k + 1];
        for j in (0..k).rev() {
            tail[j] = tail[j + 1] + g[j];
        }
        let gradient = jac.transpose() * &g;
        let hessian = h.map(|h| {
            let mut hp = jac.transpose() * h * &jac;
            for col in 1..k {
                hp[(col, col)] += gaps[col - 1] * tail[col];
            }
            hp
        });
        Evaluation { value, gradient, hessian }
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solve `(-H + lambda I) d = g`, raising `lambda` until the system is
/// positive definite. Falls back to a scaled gradient step.
fn newton_direction(hessian: &DMatrix<f64>, gradient: &DVector<f64>) -> DVector<f64> {
    let neg = -hessian.clone();
    if let Some(chol) = neg.clone().cholesky() {
        return chol.solve(gradient);
    }
    let scale = neg.diagonal().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut lambda = 1e-8 * scale;
    for _ in 0..16 {
        let damped = &neg + DMatrix::<f64>::identity(neg.nrows(), neg.ncols()) * lambda;
        if let Some(chol) = damped.cholesky() {
            return chol.solve(gradient);
        }
        lambda *= 10.0;
    }
    gradient / scale
}

fn optimize(surface: &LikelihoodSurface, start: Vec<f64>, opts: &FitOptions) -> (Vec<f64>, f64, f64, usize, bool) {
    let mut params = DVector::from_vec(start);
    let mut eval = surface.evaluate(params.as_slice(), true);
    let mut iterations = 0;
    let mut converged = inf_norm(&eval.gradient) < opts.grad_tol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let direction = newton_direction(eval.hessian.as_ref().expect("hessian"), &eval.gradient);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &params + &direction * step;
            if candidate.iter().all(|x| x.is_finite()) {
                let value = surface.log_likelihood(candidate.as_slice());
                let flat = step == 1.0 && value >= eval.value - 1e-12 * (1.0 + eval.value.abs());
                if value > eval.value || flat {
                    accepted = Some(candidate);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        params = next;
        eval = surface.evaluate(params.as_slice(), true);
        converged = inf_norm(&eval.gradient) < opts.grad_tol;
    }
    let gnorm = inf_norm(&eval.gradient);
    (params.iter().copied().collect(), eval.value, gnorm, iterations, converged)
}

/// Fit with each variable's reference at its first populated level.
pub fn fit_pom(data: &CategorizedTable, opts: &FitOptions) -> Result<PomFit> {
    fit_with_references(data, &HashMap::new(), None, opts)
}

/// Warm-start intercepts and per-variable coefficients.
pub type WarmStart<'a> = (&'a [f64], &'a HashMap<String, Vec<f64>>);

/// Fit with explicit reference levels (by variable name; unlisted
/// variables use their first populated level), optionally warm-started from
/// natural parameters `(theta, per-variable coefficients)`.
pub fn fit_with_references(
    data: &CategorizedTable,
    references: &HashMap<String, usize>,
    start: Option<WarmStart<'_>>,
    opts: &FitOptions,
) -> Result<PomFit> {
    if opts.grad_tol.is_nan() || opts.grad_tol <= 0.0 {
        return Err(ScoreError::validation("grad_tol must be positive"));
    }
    data.outcome.require_all_categories()?;
    let j = data.outcome.n_categories();
    let n_theta = j - 1;
    let mut warnings = Vec::new();

    let mut variables = Vec::new();
    let mut codes_by_var = Vec::new();
    for var in &data.variables {
        if var.is_single_category() {
            warnings.push(format!("dropped single-category variable '{}'", var.name));
            continue;
        }
        let mut counts = vec![0usize; var.levels.len()];
        for &c in &var.codes {
            counts[c] += 1;
        }
        let populated: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] > 0).collect();
        if populated.len() < 2 {
            warnings.push(format!("dropped variable '{}' with a single observed level", var.name));
            continue;
        }
        let reference = match references.get(&var.name) {
            Some(&r) if r < var.levels.len() && counts[r] > 0 => r,
            Some(&r) => {
                return Err(ScoreError::validation(format!(
                    "reference level {r} of '{}' is out of range or unobserved",
                    var.name
                )))
            }
            None => populated[0],
        };
        let estimated: Vec<bool> = (0..counts.len()).map(|l| l != reference && counts[l] > 0).collect();
        for (l, &c) in counts.iter().enumerate() {
            if c == 0 {
                warnings.push(format!(
                    "level '{}' of '{}' has no training rows; its coefficient is fixed at 0",
                    var.levels[l], var.name
                ));
            }
        }
        variables.push(PomVariable {
            name: var.name.clone(),
            levels: var.levels.clone(),
            reference,
            coefficients: vec![0.0; var.levels.len()],
            estimated,
            cutoffs: var.cutoffs.clone(),
        });
        codes_by_var.push(&var.codes);
    }

    let layout = Layout::from_variables(&variables);
    let codes: Vec<Vec<usize>> = (0..data.n_rows())
        .map(|r| codes_by_var.iter().map(|c| c[r]).collect())
        .collect();
    let surface = LikelihoodSurface::new(&layout, &codes, data.outcome.values(), n_theta, opts.link);

    let init = match start {
        Some((theta, coefs)) => {
            if theta.len() != n_theta || theta.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ScoreError::validation("warm-start intercepts must be increasing, one per split"));
            }
            let mut p = vec![theta[0]];
            p.extend(theta.windows(2).map(|w| (w[1] - w[0]).ln()));
            p.resize(n_theta + layout.n_beta, 0.0);
            for (v, idx) in variables.iter().zip(&layout.index) {
                if let Some(c) = coefs.get(&v.name) {
                    for (l, slot) in idx.iter().enumerate() {
                        if let Some(i) = slot {
                            p[n_theta + i] = c[l];
                        }
                    }
                }
            }
            p
        }
        None => {
            let counts = data.outcome.counts();
            let n = data.n_rows() as f64;
            let mut cum = 0usize;
            let theta: Vec<f64> = counts[..n_theta]
                .iter()
                .map(|&c| {
                    cum += c;
                    opts.link.quantile(cum as f64 / n)
                })
                .collect();
            let mut p = vec![theta[0]];
            p.extend(theta.windows(2).map(|w| (w[1] - w[0]).ln()));
            p.resize(n_theta + layout.n_beta, 0.0);
            p
        }
    };

    let (params, value, gnorm, iterations, converged) = optimize(&surface, init, opts);
    let theta = surface.thetas(&params);
    for (v, idx) in variables.iter_mut().zip(&layout.index) {
        for (l, slot) in idx.iter().enumerate() {
            if let Some(i) = slot {
                v.coefficients[l] = params[n_theta + i];
            }
        }
    }
    let separation = variables
        .iter()
        .flat_map(|v| v.coefficients.iter())
        .any(|c| c.abs() > SEPARATION_THRESHOLD);
    if separation {
        warnings.push(format!(
            "coefficient magnitude exceeds {SEPARATION_THRESHOLD}: the data may be separated"
        ));
    }
    if !converged {
        warnings.push(format!(
            "not converged after {iterations} iterations (gradient norm {gnorm:e})"
        ));
    }
    Ok(PomFit {
        link: opts.link,
        theta,
        variables,
        outcome_labels: data.outcome.labels().to_vec(),
        diagnostics: FitDiagnostics {
            log_likelihood: value,
            converged,
            gradient_norm: gnorm,
            iterations,
            separation,
            warnings,
        },
    })
}

/// Re-chooses each variable's reference as its lowest-effect level and
/// refits once, so that every coefficient is non-negative.
pub fn refit_positive(fit: &PomFit, data: &CategorizedTable, opts: &FitOptions) -> Result<PomFit> {
    let mut references = HashMap::new();
    let mut start_coefs = HashMap::new();
    let mut shift = 0.0;
    for v in &fit.variables {
        let candidates = (0..v.levels.len()).filter(|&l| l == v.reference || v.estimated[l]);
        let min = candidates
            .clone()
            .map(|l| v.coefficients[l])
            .fold(f64::INFINITY, f64::min);
        let new_ref = if v.coefficients[v.reference] <= min {
            v.reference
        } else {
            candidates.clone().find(|&l| v.coefficients[l] == min).expect("min attained")
        };
        let offset = v.coefficients[new_ref];
        shift += offset;
        references.insert(v.name.clone(), new_ref);
        start_coefs.insert(
            v.name.clone(),
            v.coefficients.iter().map(|c| c - offset).collect::<Vec<f64>>(),
        );
    }
    let theta: Vec<f64> = fit.theta.iter().map(|t| t - shift).collect();
    let mut refit = fit_with_references(data, &references, Some((&theta, &start_coefs)), &FitOptions {
        link: fit.link,
        ..opts.clone()
    })?;
    if !fit.diagnostics.converged {
        refit
            .diagnostics
            .warnings
            .push("positive refit started from a non-converged fit".into());
    }
    if !refit.diagnostics.converged && !refit.diagnostics.separation {
        return Err(ScoreError::Fit(format!(
            "positive refit did not converge (gradient norm {:e})",
            refit.diagnostics.gradient_norm
        )));
    }
    let mut clamped = Vec::new();
    for v in &mut refit.variables {
        for (l, c) in v.coefficients.iter_mut().enumerate() {
            if *c < -CLAMP_TOLERANCE {
                return Err(ScoreError::Fit(format!(
                    "coefficient {c} for '{}' level '{}' is negative after the positive refit",
                    v.name, v.levels[l]
                )));
            }
            if *c < 0.0 {
                clamped.push(format!("{}={}", v.name, v.levels[l]));
                *c = 0.0;
            }
        }
    }
    if !clamped.is_empty() {
        refit
            .diagnostics
            .warnings
            .push(format!("clamped tiny negative coefficients to 0: {}", clamped.join(", ")));
    }
    Ok(refit)
}

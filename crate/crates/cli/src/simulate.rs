//! Chi-square sanity check that zero-effect simulated predictors are
//! independent of the outcome.

use ordscore_core::data::{Column, DataTable};
use ordscore_core::stats::quantile_sorted;
use ordscore_core::transform::interval_index;
use ordscore_core::{Result, ScoreError};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Independence is flagged below this p-value.
pub const FLAG_P_VALUE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceCheck {
    pub variable: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub flagged: bool,
}

/// Pearson chi-square test of independence on a contingency table; empty
/// rows and columns are dropped. `None` when fewer than two remain either way.
pub fn chi_square(table: &[Vec<usize>]) -> Option<(f64, usize, f64)> {
    let ncol = table.first().map_or(0, Vec::len);
    let col_tot: Vec<usize> = (0..ncol).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let rows: Vec<&Vec<usize>> = table.iter().filter(|r| r.iter().sum::<usize>() > 0).collect();
    let cols: Vec<usize> = (0..ncol).filter(|&c| col_tot[c] > 0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return None;
    }
    let n: f64 = col_tot.iter().sum::<usize>() as f64;
    let mut stat = 0.0;
    for r in &rows {
        let rt = r.iter().sum::<usize>() as f64;
        for &c in &cols {
            let e = rt * col_tot[c] as f64 / n;
            stat += (r[c] as f64 - e).powi(2) / e;
        }
    }
    let df = (rows.len() - 1) * (cols.len() - 1);
    let p = ChiSquared::new(df as f64).ok()?.sf(stat);
    Some((stat, df, p))
}

/// Tests each named column against the outcome; continuous columns are cut
/// at their quartiles.
pub fn independence_checks(table: &DataTable, variables: &[String]) -> Result<Vec<IndependenceCheck>> {
    let y = table.outcome().values();
    let j = table.outcome().n_categories();
    let mut out = Vec::new();
    for name in variables {
        let (_, col) = table
            .column(name)
            .ok_or_else(|| ScoreError::validation(format!("unknown variable '{name}'")))?;
        let groups: Vec<usize> = match col {
            Column::Categorical(codes) => codes.clone(),
            Column::Continuous(values) => {
                let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
                if sorted.is_empty() {
                    continue;
                }
                sorted.sort_by(f64::total_cmp);
                let mut cuts: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|&p| quantile_sorted(&sorted, p)).collect();
                cuts.dedup();
                values.iter().map(|v| v.map_or(cuts.len() + 1, |x| interval_index(&cuts, x))).collect()
            }
        };
        let n_groups = groups.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0usize; j]; n_groups];
        for (&g, &yy) in groups.iter().zip(y) {
            counts[g][yy - 1] += 1;
        }
        if let Some((statistic, df, p_value)) = chi_square(&counts) {
            out.push(IndependenceCheck {
                variable: name.clone(),
                statistic,
                df,
                p_value,
                flagged: p_value < FLAG_P_VALUE,
            });
        }
    }
    Ok(out)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ordscore_cli::commands;
use ordscore_cli::config::LoadedConfig;
use ordscore_cli::{exit_code, EXIT_VALIDATION};
use ordscore_core::{Result, ScoreError};

#[derive(Parser)]
#[command(name = "ordscore", version, about = "Point scorecards for ordinal outcomes")]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; overrides the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Replaces the split, forest and bootstrap seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stratified train/validation/test split and imputation medians.
    Split,
    /// Random-forest variable ranking.
    Rank,
    /// Validation mAUC as ranked variables are added.
    Parsimony,
    /// Scorecard and lookup table for the selected variables.
    Build,
    /// Rebuild with user cut-offs.
    Finetune {
        #[arg(long)]
        overrides: Option<PathBuf>,
    },
    /// Test-set mAUC and c-index with bootstrap intervals.
    Evaluate {
        /// Add the proportional odds model on the same variables.
        #[arg(long)]
        pom: bool,
        /// Add a random forest on the same variables.
        #[arg(long)]
        forest: bool,
    },
    /// All stages in order.
    Run {
        #[arg(long)]
        pom: bool,
        #[arg(long)]
        forest: bool,
    },
    /// Score new rows with a scorecard and lookup table.
    Predict {
        #[arg(long)]
        card: PathBuf,
        #[arg(long)]
        lookup: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Imputation plan used to fill missing continuous cells.
        #[arg(long)]
        imputation: Option<PathBuf>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra input column to pass through (repeatable).
        #[arg(long = "keep-column")]
        keep_columns: Vec<String>,
    },
    /// Write a synthetic dataset from a generative spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<LoadedConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| ScoreError::validation("this command needs --config"))?;
    LoadedConfig::load(path, cli.out_dir.as_deref(), cli.seed)
}

fn wrote(cfg: &LoadedConfig, names: &[&str]) {
    for n in names {
        println!("wrote {}", cfg.artifact(n).display());
    }
}

fn print_report(report: &ordscore_core::eval::EvalReport) {
    for m in &report.models {
        println!(
            "{}: n = {}, mAUC {:.3} ({:.3}, {:.3}), c-index {:.3} ({:.3}, {:.3})",
            m.model, m.n, m.mauc.point, m.mauc.lower, m.mauc.upper, m.c_index.point, m.c_index.lower, m.c_index.upper
        );
    }
}

fn run(cli: &Cli) -> Result<()> {
    use commands::*;
    match &cli.command {
        Command::Split => {
            let cfg = load(cli)?;
            let s = cmd_split(&cfg)?;
            println!("train {}, validation {}, test {}", s.train.len(), s.validation.len(), s.test.len());
            wrote(&cfg, &[SPLITS, IMPUTATION]);
        }
        Command::Rank => {
            let cfg = load(cli)?;
            let ranking = cmd_rank(&cfg)?;
            for (i, e) in ranking.entries.iter().enumerate() {
                println!("{:>3}  {:<24} {:.4}", i + 1, e.variable, e.importance);
            }
            wrote(&cfg, &[RANKING]);
        }
        Command::Parsimony => {
            let cfg = load(cli)?;
            let curve = cmd_parsimony(&cfg)?;
            for p in &curve.points {
                println!("{:>3}  {:<24} {:.4}", p.k, p.variable, p.mauc);
            }
            wrote(&cfg, &[PARSIMONY_CSV, PARSIMONY_SVG]);
        }
        Command::Build | Command::Finetune { .. } => {
            let cfg = load(cli)?;
            let model = match &cli.command {
                Command::Finetune { overrides } => cmd_finetune(&cfg, overrides.as_deref())?,
                _ => cmd_build(&cfg)?,
            };
            println!("{} variables, maximum total score {}", model.card.variables.len(), model.card.max_total);
            wrote(&cfg, &[CUTOFFS, POM_FIT, SCORECARD_JSON, SCORECARD_CSV, LOOKUP]);
        }
        Command::Evaluate { pom, forest } => {
            let cfg = load(cli)?;
            print_report(&cmd_evaluate(&cfg, *pom, *forest)?);
            wrote(&cfg, &[REPORT_JSON, REPORT_CSV]);
        }
        Command::Run { pom, forest } => {
            let cfg = load(cli)?;
            print_report(&cmd_run(&cfg, *pom, *forest)?);
            println!("artifacts in {}", cfg.out_dir().display());
        }
        Command::Predict {
            card,
            lookup,
            input,
            imputation,
            out,
            keep_columns,
        } => {
            let args = PredictArgs {
                card,
                lookup,
                input,
                imputation: imputation.as_deref(),
                extra_columns: keep_columns,
            };
            match out {
                Some(path) => {
                    let file = std::fs::File::create(path).map_err(|e| ScoreError::io(path, e))?;
                    let rows = cmd_predict(&args, file)?;
                    println!("scored {} rows into {}", rows.len(), path.display());
                }
                None => {
                    cmd_predict(&args, std::io::stdout().lock())?;
                }
            }
        }
        Command::Simulate { spec, out, schema_out } => {
            let summary = cmd_simulate(spec, out, schema_out.as_deref())?;
            println!("{} rows, outcome counts {:?}", summary.rows, summary.outcome_counts);
            for c in &summary.independence {
                println!("  {}: chi-square {:.2} on {} df, p = {:.3}", c.variable, c.statistic, c.df, c.p_value);
            }
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

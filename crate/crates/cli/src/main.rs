//! `isoscale`: generate, run, fit, forecast, cross-validate and report.
//!
//! Exit codes: 0 success, 1 partial (some fits failed), 2 usage or
//! configuration error.

mod commands;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "isoscale", version, about = "Compute-optimal scaling-law fitting for imitation and RL experiment logs")]
struct Cli {
    /// Directory for outputs (created if missing).
    #[arg(long, global = true, env = "ISOSCALE_OUT_DIR", default_value = "isoscale-out")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic records with known ground truth.
    Synth(SynthArgs),
    /// Run the desk-scale behavioral cloning sweep.
    BcRun(BcRunArgs),
    /// Fit isoFLOP and/or parametric scaling laws to records.
    Fit(FitArgs),
    /// Forecast compute and allocation from a fit report.
    Forecast(ForecastArgs),
    /// Rolling one-step-ahead cross-validation of the isoFLOP regressions.
    Cv(CvArgs),
    /// Summarize the outputs in a directory as plain text.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    /// Synth spec (JSON); the built-in default spec when omitted.
    pub spec: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct BcRunArgs {
    /// Sweep config (JSON); the built-in default sweep when omitted.
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Isoflop,
    Parametric,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    Loss,
    Return,
    /// Every metric the records carry.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum RuleChoice {
    #[value(name = "6nd")]
    #[serde(rename = "6nd")]
    SixNd,
    #[value(name = "8nd")]
    #[serde(rename = "8nd")]
    EightNd,
}

impl RuleChoice {
    pub fn rule(self) -> isoscale::FlopRule {
        match self {
            RuleChoice::SixNd => isoscale::FlopRule::LinearBc,
            RuleChoice::EightNd => isoscale::FlopRule::LinearRl,
        }
    }
}

/// Options shared by `fit` and `cv` for turning records into isoFLOP groups.
#[derive(Args, Serialize, Clone)]
pub struct SelectArgs {
    /// Records file (JSONL, or CSV by extension).
    pub records: PathBuf,
    #[arg(long, value_enum, default_value = "loss")]
    pub metric: MetricChoice,
    /// FLOP rule used to derive D_opt from C and N_opt.
    #[arg(long, value_enum, default_value = "6nd")]
    pub rule: RuleChoice,
    /// Only use records of this setting (bc_loss, bc_return, rl_return).
    #[arg(long)]
    pub setting: Option<String>,
    /// Drop the k smallest budgets before fitting.
    #[arg(long, default_value_t = 0)]
    pub skip_budgets: usize,
    /// Relative FLOP tolerance for grouping records into one budget.
    #[arg(long, default_value_t = isoscale::records::DEFAULT_BUDGET_REL_TOL)]
    pub budget_rel_tol: f64,
}

#[derive(Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub method: Method,
    /// Also render SVG charts next to the plot CSVs.
    #[arg(long)]
    pub svg: bool,
    /// Report budgets where the fitted return law passes this ceiling.
    #[arg(long)]
    pub return_ceiling: Option<f64>,
    /// Report budgets where the fitted loss law drops below this floor.
    #[arg(long)]
    pub loss_floor: Option<f64>,
}

#[derive(Args, Serialize)]
pub struct ForecastArgs {
    /// Fit report produced by `fit`.
    pub report: PathBuf,
    #[command(flatten)]
    pub target: ForecastTarget,
}

/// Exactly one forecast target.
#[derive(Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct ForecastTarget {
    /// Forecast the budget and allocation that reach this mean return.
    #[arg(long)]
    pub target_return: Option<f64>,
    /// Forecast the budget and allocation that reach this loss.
    #[arg(long)]
    pub target_loss: Option<f64>,
    /// Allocate a fixed FLOP budget.
    #[arg(long)]
    pub budget: Option<f64>,
}

#[derive(Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    /// Number of leading budgets in the first training window.
    #[arg(long, default_value_t = isoscale::crossval::DEFAULT_MIN_TRAIN)]
    pub min_train: usize,
}

#[derive(Args, Serialize)]
pub struct ReportArgs {
    /// Directory holding fit/forecast/cv outputs; defaults to --out-dir.
    pub dir: Option<PathBuf>,
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Some fits failed; their errors are in the output.
    Partial,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let out = cli.out_dir.as_path();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth::run(out, a),
        Command::BcRun(a) => commands::bc::run(out, a),
        Command::Fit(a) => commands::fit::run(out, a),
        Command::Forecast(a) => commands::forecast::run(out, a),
        Command::Cv(a) => commands::cv::run(out, a),
        Command::Report(a) => commands::report::run(out, a),
    };
    match result {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

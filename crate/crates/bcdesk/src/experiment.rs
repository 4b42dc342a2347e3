//! Width × budget sweep producing isoFLOP experiment records.

use std::collections::BTreeMap;

use isoscale::records::{ExperimentRecord, Setting};
use isoscale::FlopRule;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{generate_expert_dataset, Dataset};
use crate::policy::param_count;
use crate::train::{evaluate_expert, evaluate_random, evaluate_return, train_bc, ActionSelection, ReturnStats, TrainConfig, TrainError};

pub const MIN_WIDTHS: usize = 4;
pub const MIN_BUDGETS: usize = 4;

fn default_train_episodes() -> usize {
    5000
}
fn default_validation_episodes() -> usize {
    100
}
fn default_eval_episodes() -> usize {
    100
}
fn default_expert_episodes() -> usize {
    1000
}
fn default_domain() -> String {
    "gridworld".to_string()
}
fn default_selection() -> ActionSelection {
    ActionSelection::Greedy
}

/// Sweep configuration. Hyperparameters are shared by every width and
/// budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcConfig {
    pub widths: Vec<usize>,
    /// Nominal FLOP budgets; each becomes a snapshot at `round(C / 6N)`.
    pub budgets: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Cells needing more training samples than this are skipped.
    pub max_samples: u64,
    #[serde(default = "default_train_episodes")]
    pub train_episodes: usize,
    #[serde(default = "default_validation_episodes")]
    pub validation_episodes: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_expert_episodes")]
    pub expert_episodes: usize,
    /// Training episodes use seeds `data_seed ..`, validation episodes
    /// `validation_seed ..`, evaluation episodes `eval_seed ..`.
    pub data_seed: u64,
    pub validation_seed: u64,
    pub eval_seed: u64,
    #[serde(default = "default_selection")]
    pub action_selection: ActionSelection,
    #[serde(default = "default_domain")]
    pub domain: String,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            widths: vec![4, 8, 16, 32, 64, 128],
            budgets: vec![3.16e8, 1e9, 3.16e9, 1e10, 3.16e10],
            seeds: vec![0, 1, 2],
            train: TrainConfig::default(),
            max_samples: 20_000_000,
            train_episodes: default_train_episodes(),
            validation_episodes: default_validation_episodes(),
            eval_episodes: default_eval_episodes(),
            expert_episodes: default_expert_episodes(),
            data_seed: 0,
            validation_seed: 1_000_000,
            eval_seed: 2_000_000,
            action_selection: ActionSelection::Greedy,
            domain: default_domain(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("width {width}, seed {seed}: {source}")]
    Train { width: usize, seed: u64, source: TrainError },
}

fn overlaps(a: u64, a_len: usize, b: u64, b_len: usize) -> bool {
    a < b.saturating_add(b_len as u64) && b < a.saturating_add(a_len as u64)
}

impl BcConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.widths.len() < MIN_WIDTHS {
            return bad(format!("need at least {MIN_WIDTHS} widths, got {}", self.widths.len()));
        }
        if self.budgets.len() < MIN_BUDGETS {
            return bad(format!("need at least {MIN_BUDGETS} budgets, got {}", self.budgets.len()));
        }
        if self.widths.iter().any(|&w| w == 0) || self.widths.windows(2).any(|w| w[0] >= w[1]) {
            return bad("widths must be ≥ 1 and strictly ascending".into());
        }
        if self.budgets.iter().any(|&c| !(c > 0.0 && c.is_finite())) || self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return bad("budgets must be positive and strictly ascending".into());
        }
        if self.seeds.is_empty() {
            return bad("need at least one seed".into());
        }
        if self.train.batch_size == 0 || !(self.train.learning_rate > 0.0) {
            return bad("batch_size and learning_rate must be positive".into());
        }
        if self.train_episodes == 0 || self.validation_episodes == 0 || self.eval_episodes == 0 {
            return bad("episode counts must be ≥ 1".into());
        }
        if overlaps(self.data_seed, self.train_episodes, self.validation_seed, self.validation_episodes) {
            return bad("validation episodes overlap training episodes".into());
        }
        Ok(())
    }
}

/// Reference returns measured once per sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// Scripted expert over `expert_episodes` episodes.
    pub expert: ReturnStats,
    /// Scripted expert on the evaluation episodes.
    pub expert_on_eval: ReturnStats,
    /// Uniform random actions on the evaluation episodes.
    pub random: ReturnStats,
}

/// One trained (width, budget, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub width: usize,
    pub params: u64,
    pub nominal_budget: f64,
    pub samples: u64,
    pub flops: f64,
    pub seed: u64,
    pub validation_loss: f64,
    pub mean_return: ReturnStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub cells: Vec<Cell>,
    pub baselines: Baselines,
    pub training_pairs: usize,
    pub validation_pairs: usize,
    pub warnings: Vec<String>,
}

/// Snapshot sample counts for one width: `(budget index, D)` pairs.
fn schedule(config: &BcConfig, width: usize, warnings: &mut Vec<String>) -> Vec<(usize, u64)> {
    let n = param_count(width) as f64;
    let k = FlopRule::LinearBc.denominator().expect("linear rule");
    let mut out: Vec<(usize, u64)> = Vec::new();
    for (i, &c) in config.budgets.iter().enumerate() {
        let d = (c / (k * n)).round() as u64;
        if d == 0 || d > config.max_samples {
            warnings.push(format!(
                "skipping width {width} at budget {c:e}: needs {d} samples (limit {})",
                config.max_samples
            ));
        } else if out.last().is_some_and(|&(_, prev)| prev == d) {
            warnings.push(format!("skipping width {width} at budget {c:e}: same sample count as the previous budget"));
        } else {
            out.push((i, d));
        }
    }
    out
}

fn record(config: &BcConfig, cell: &Cell, setting: Setting) -> ExperimentRecord {
    let mut meta = BTreeMap::new();
    meta.insert("width".to_string(), cell.width.to_string());
    meta.insert("nominal_budget".to_string(), format!("{:e}", cell.nominal_budget));
    meta.insert("return_se".to_string(), format!("{:e}", cell.mean_return.se));
    meta.insert(
        "action_selection".to_string(),
        serde_variant(config.action_selection).to_string(),
    );
    ExperimentRecord {
        domain: config.domain.clone(),
        setting,
        flops: cell.flops,
        params: cell.params,
        samples: cell.samples as f64,
        loss: Some(cell.validation_loss),
        mean_return: Some(cell.mean_return.mean),
        seed: cell.seed as i64,
        meta,
    }
}

fn serde_variant(selection: ActionSelection) -> &'static str {
    match selection {
        ActionSelection::Greedy => "greedy",
        ActionSelection::Sample => "sample",
    }
}

/// Train every (width, seed) run once, snapshot it at each budget's sample
/// count, and emit a `bc_loss` and a `bc_return` record per snapshot.
///
/// Runs execute in parallel; output order is seed-major, then width, then
/// budget, independent of scheduling.
pub fn run_isoflop_experiment(config: &BcConfig) -> Result<ExperimentOutput, ExperimentError> {
    config.validate()?;
    let train = generate_expert_dataset(config.train_episodes, config.data_seed);
    let validation = generate_expert_dataset(config.validation_episodes, config.validation_seed);

    let mut warnings = Vec::new();
    let schedules: Vec<(usize, Vec<(usize, u64)>)> =
        config.widths.iter().map(|&w| (w, schedule(config, w, &mut warnings))).collect();
    for w in &warnings {
        warn!("{w}");
    }

    let jobs: Vec<(u64, usize, &Vec<(usize, u64)>)> = config
        .seeds
        .iter()
        .flat_map(|&seed| schedules.iter().map(move |(w, s)| (seed, *w, s)))
        .filter(|(_, _, s)| !s.is_empty())
        .collect();

    let results: Vec<Result<Vec<Cell>, ExperimentError>> = jobs
        .par_iter()
        .map(|&(seed, width, sched)| run_cell(config, &train, &validation, width, seed, sched))
        .collect();

    let mut cells = Vec::new();
    for r in results {
        cells.extend(r?);
    }
    let records = cells
        .iter()
        .flat_map(|c| [record(config, c, Setting::BcLoss), record(config, c, Setting::BcReturn)])
        .collect();

    let baselines = Baselines {
        expert: evaluate_expert(config.expert_episodes, config.eval_seed),
        expert_on_eval: evaluate_expert(config.eval_episodes, config.eval_seed),
        random: evaluate_random(config.eval_episodes, config.eval_seed),
    };
    Ok(ExperimentOutput {
        records,
        cells,
        baselines,
        training_pairs: train.len(),
        validation_pairs: validation.len(),
        warnings,
    })
}

fn run_cell(
    config: &BcConfig,
    train: &Dataset,
    validation: &Dataset,
    width: usize,
    seed: u64,
    sched: &[(usize, u64)],
) -> Result<Vec<Cell>, ExperimentError> {
    let sample_counts: Vec<u64> = sched.iter().map(|&(_, d)| d).collect();
    let d_max = *sample_counts.last().expect("non-empty schedule");
    let snapshots = train_bc(train, validation, width, d_max, &sample_counts, &config.train, seed)
        .map_err(|source| ExperimentError::Train { width, seed, source })?;
    let params = param_count(width);
    Ok(sched
        .iter()
        .zip(snapshots)
        .map(|(&(i, d), snap)| Cell {
            width,
            params,
            nominal_budget: config.budgets[i],
            samples: d,
            flops: FlopRule::LinearBc.flops(params as f64, d as f64).expect("positive N and D"),
            seed,
            validation_loss: snap.validation_loss,
            mean_return: evaluate_return(&snap.policy, config.eval_episodes, config.eval_seed, config.action_selection),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BcConfig {
        BcConfig {
            widths: vec![2, 4, 8, 16],
            budgets: vec![2e7, 4e7, 8e7, 1.6e8],
            seeds: vec![0],
            train_episodes: 200,
            validation_episodes: 20,
            eval_episodes: 20,
            expert_episodes: 50,
            ..BcConfig::default()
        }
    }

    #[test]
    fn record_counts_and_rule() {
        let out = run_isoflop_experiment(&tiny()).unwrap();
        assert_eq!(out.cells.len(), 16);
        assert_eq!(out.records.len(), 32);
        for r in &out.records {
            r.check_rule(&FlopRule::LinearBc).unwrap();
            assert!(r.meta.contains_key("width"));
            assert!(r.loss.is_some() && r.mean_return.is_some());
        }
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn too_few_widths_is_a_config_error() {
        let cfg = BcConfig { widths: vec![4], ..tiny() };
        assert!(matches!(run_isoflop_experiment(&cfg), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn unreachable_cells_are_skipped() {
        let cfg = BcConfig { max_samples: 10_000, ..tiny() };
        let out = run_isoflop_experiment(&cfg).unwrap();
        assert!(out.cells.len() < 16);
        assert!(!out.warnings.is_empty());
        assert!(out.cells.iter().all(|c| c.samples <= 10_000));
    }

    #[test]
    fn overlapping_seed_ranges_rejected() {
        let cfg = BcConfig { validation_seed: 100, ..tiny() };
        assert!(cfg.validate().is_err());
    }
}

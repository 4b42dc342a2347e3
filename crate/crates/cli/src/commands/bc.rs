use std::path::Path;

use anyhow::{Context, Result};
use bcdesk::{run_isoflop_experiment, BcConfig};
use isoscale::numerics::spearman;
use isoscale::records::to_jsonl;
use serde::Serialize;

use crate::output::{read_input, Run};
use crate::{BcRunArgs, Status};

pub const RECORDS_FILE: &str = "bc_records.jsonl";
pub const SUMMARY_FILE: &str = "bc_summary.json";

/// Best seed-averaged return over widths at each budget.
#[derive(Debug, Clone, Serialize)]
pub struct BudgetBest {
    pub budget: f64,
    pub width: usize,
    pub mean_return: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    manifest_digest: &'a str,
    config: &'a BcConfig,
    baselines: &'a bcdesk::Baselines,
    training_pairs: usize,
    validation_pairs: usize,
    best_return_by_budget: Vec<BudgetBest>,
    /// Rank correlation between budget and best return.
    best_return_spearman: f64,
    cells: &'a [bcdesk::Cell],
    warnings: &'a [String],
}

pub fn best_return_by_budget(config: &BcConfig, cells: &[bcdesk::Cell]) -> Vec<BudgetBest> {
    config
        .budgets
        .iter()
        .filter_map(|&budget| {
            config
                .widths
                .iter()
                .filter_map(|&width| {
                    let returns: Vec<f64> = cells
                        .iter()
                        .filter(|c| c.nominal_budget == budget && c.width == width)
                        .map(|c| c.mean_return.mean)
                        .collect();
                    (!returns.is_empty())
                        .then(|| (width, returns.iter().sum::<f64>() / returns.len() as f64))
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(width, mean_return)| BudgetBest { budget, width, mean_return })
        })
        .collect()
}

pub fn run(out_dir: &Path, args: &BcRunArgs) -> Result<Status> {
    let (config, input) = match &args.config {
        Some(path) => {
            let bytes = read_input(path)?;
            let config: BcConfig =
                serde_json::from_slice(&bytes).with_context(|| format!("invalid bc config {}", path.display()))?;
            (config, Some((path.as_path(), bytes)))
        }
        None => (BcConfig::default(), None),
    };
    config.validate()?;
    let inputs: Vec<(&Path, &[u8])> = input.iter().map(|(p, b)| (*p, b.as_slice())).collect();
    let mut run = Run::new(out_dir, "bc-run", serde_json::to_value(&config)?, &inputs);

    let mut output = run_isoflop_experiment(&config)?;
    for r in &mut output.records {
        r.meta.insert("manifest_digest".into(), run.digest().to_string());
    }
    let best = best_return_by_budget(&config, &output.cells);
    let xs: Vec<f64> = best.iter().map(|b| b.budget).collect();
    let ys: Vec<f64> = best.iter().map(|b| b.mean_return).collect();
    let summary = Summary {
        manifest_digest: run.digest(),
        config: &config,
        baselines: &output.baselines,
        training_pairs: output.training_pairs,
        validation_pairs: output.validation_pairs,
        best_return_spearman: spearman(&xs, &ys),
        best_return_by_budget: best,
        cells: &output.cells,
        warnings: &output.warnings,
    };
    let summary_json = serde_json::to_string_pretty(&summary)?;
    run.write(RECORDS_FILE, to_jsonl(&output.records).as_bytes())?;
    run.write(SUMMARY_FILE, format!("{summary_json}\n").as_bytes())?;
    let manifest = run.finish()?;
    println!(
        "wrote {} records to {} (expert return {:.3}, random {:.3})",
        output.records.len(),
        out_dir.join(RECORDS_FILE).display(),
        output.baselines.expert.mean,
        output.baselines.random.mean
    );
    println!("manifest {}", manifest.display());
    Ok(Status::Success)
}

//! One module per subcommand, plus record selection shared by `fit` and `cv`.

pub mod bc;
pub mod cv;
pub mod fit;
pub mod forecast;
pub mod report;
pub mod synth;

use std::path::Path;

use anyhow::{bail, Context, Result};
use isoscale::records::{group_by_budget, parse_records_str, BudgetGroup, Format};
use isoscale::{ExperimentRecord, Metric, Setting};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::output::read_input;
use crate::{MetricChoice, SelectArgs};

/// Training failures are runtime failures (1); everything else that stops a
/// command is a usage or configuration problem (2).
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<bcdesk::ExperimentError>() {
        Some(bcdesk::ExperimentError::Train { .. }) => 1,
        _ => 2,
    }
}

/// A result slot in a report: either the value or the error that replaced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Ok(T),
    Error(String),
}

impl<T> Outcome<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Outcome::Ok(v) => Some(v),
            Outcome::Error(_) => None,
        }
    }

    pub fn error(&self) -> Option<&str> {
        match self {
            Outcome::Ok(_) => None,
            Outcome::Error(e) => Some(e),
        }
    }
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Outcome<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Outcome::Ok(v),
            Err(e) => Outcome::Error(e.to_string()),
        }
    }
}

pub struct LoadedRecords {
    pub bytes: Vec<u8>,
    pub records: Vec<ExperimentRecord>,
    pub warnings: Vec<String>,
}

pub fn load_records(path: &Path) -> Result<LoadedRecords> {
    let bytes = read_input(path)?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let records = parse_records_str(text, Format::from_path(path)).with_context(|| format!("parsing {}", path.display()))?;
    if records.is_empty() {
        bail!("{} holds no records", path.display());
    }
    let mut warnings = Vec::new();
    let nonpositive = records.iter().filter(|r| r.has_nonpositive_return()).count();
    if nonpositive > 0 {
        let msg = format!("{nonpositive} record(s) have nonpositive mean_return; log-space fits will skip them");
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(LoadedRecords { bytes, records, warnings })
}

pub fn requested_metrics(choice: MetricChoice) -> Vec<Metric> {
    match choice {
        MetricChoice::Loss => vec![Metric::Loss],
        MetricChoice::Return => vec![Metric::Return],
        MetricChoice::All => vec![Metric::Loss, Metric::Return],
    }
}

/// Records of one setting that carry `metric`, grouped into budgets.
pub struct Selection {
    pub metric: Metric,
    pub setting: Setting,
    pub groups: Vec<BudgetGroup>,
    pub skipped_budgets: Vec<f64>,
}

impl Selection {
    pub fn records(&self) -> Vec<ExperimentRecord> {
        self.groups.iter().flat_map(|g| g.records.iter().cloned()).collect()
    }

    pub fn budgets(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.budget).collect()
    }
}

/// Pick the records to fit for `metric`.
///
/// With no explicit setting, records whose setting is measured on `metric`
/// win (`bc_loss` for loss); failing that, any records carrying the metric
/// are used. The chosen records must share one setting.
pub fn select(records: &[ExperimentRecord], metric: Metric, args: &SelectArgs) -> Result<Selection> {
    let setting_filter: Option<Setting> = match &args.setting {
        Some(s) => Some(s.parse().map_err(anyhow::Error::msg)?),
        None => None,
    };
    let pool: Vec<&ExperimentRecord> = match setting_filter {
        Some(s) => records.iter().filter(|r| r.setting == s).collect(),
        None => {
            let native: Vec<&ExperimentRecord> =
                records.iter().filter(|r| r.setting.required_metric() == metric).collect();
            if native.is_empty() {
                records.iter().collect()
            } else {
                native
            }
        }
    };
    let chosen: Vec<ExperimentRecord> = pool.into_iter().filter(|r| r.metric(metric).is_some()).cloned().collect();
    let Some(first) = chosen.first() else {
        let field = match metric {
            Metric::Loss => "loss",
            Metric::Return => "mean_return",
        };
        bail!("no records carry `{field}`, so --metric {metric} cannot be fitted");
    };
    let setting = first.setting;
    if let Some(other) = chosen.iter().find(|r| r.setting != setting) {
        bail!(
            "records for --metric {metric} mix settings {setting} and {}; choose one with --setting",
            other.setting
        );
    }
    let mut groups = group_by_budget(&chosen, args.budget_rel_tol)?;
    if args.skip_budgets >= groups.len() {
        bail!("--skip-budgets {} leaves no budgets (found {})", args.skip_budgets, groups.len());
    }
    let skipped_budgets = groups.drain(..args.skip_budgets).map(|g| g.budget).collect();
    Ok(Selection { metric, setting, groups, skipped_budgets })
}

/// Selections for every requested metric the records can support. A metric
/// requested alone must be present; with `all`, missing metrics are noted.
pub fn select_all(records: &[ExperimentRecord], args: &SelectArgs, notes: &mut Vec<String>) -> Result<Vec<Selection>> {
    let metrics = requested_metrics(args.metric);
    let mut out = Vec::new();
    for m in &metrics {
        match select(records, *m, args) {
            Ok(s) => out.push(s),
            Err(e) if metrics.len() > 1 => notes.push(format!("{m}: {e:#}")),
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        bail!("no requested metric could be selected: {}", notes.join("; "));
    }
    Ok(out)
}

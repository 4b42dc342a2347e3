use std::path::Path;

use anyhow::Result;
use isoscale::crossval::{cv_all, trajectory_csv, CvFailure, CvReport};
use isoscale::isoflop::{approach1_laws, Objective};
use serde::Serialize;

use super::{load_records, select_all, Outcome};
use crate::output::Run;
use crate::{CvArgs, Status};

pub const REPORT_FILE: &str = "cv_report.json";
pub const TRAJECTORY_FILE: &str = "cv_trajectory.csv";

#[derive(Serialize)]
struct CvOutput {
    manifest_digest: String,
    records_path: String,
    min_train: usize,
    reports: Vec<Outcome<CvReport>>,
    warnings: Vec<String>,
}

pub fn run(out_dir: &Path, args: &CvArgs) -> Result<Status> {
    let loaded = load_records(&args.select.records)?;
    let mut warnings = loaded.warnings.clone();
    let selections = select_all(&loaded.records, &args.select, &mut warnings)?;
    let rule = args.select.rule.rule();
    let mut run = Run::new(
        out_dir,
        "cv",
        serde_json::to_value(args)?,
        &[(args.select.records.as_path(), loaded.bytes.as_slice())],
    );

    // Three regressions per metric: N_opt, D_opt and the optimal metric, each
    // against the budget.
    let mut inputs = Vec::new();
    let mut failures = Vec::new();
    for sel in &selections {
        let m = sel.metric;
        let names = [format!("{m}_n_opt"), format!("{m}_d_opt"), format!("{m}_opt")];
        match approach1_laws(&sel.groups, Objective::from(m), &rule) {
            Ok(laws) => {
                warnings.extend(laws.warnings.iter().map(|w| format!("{m}: {w}")));
                let [n, d, opt] = names;
                inputs.push((n, laws.optima.iter().map(|o| (o.budget, o.n_opt)).collect()));
                inputs.push((d, laws.optima.iter().map(|o| (o.budget, o.d_opt)).collect()));
                inputs.push((opt, laws.optima.iter().map(|o| (o.budget, o.metric_opt)).collect()));
            }
            Err(e) => failures.extend(names.into_iter().map(|regression_name| CvFailure {
                regression_name,
                error: format!("isoFLOP optima unavailable: {e}"),
            })),
        }
    }
    let mut reports: Vec<Outcome<CvReport>> = cv_all(&inputs, args.min_train)
        .into_iter()
        .map(|r| match r {
            Ok(report) => Outcome::Ok(report),
            Err(f) => Outcome::Error(format!("{}: {}", f.regression_name, f.error)),
        })
        .collect();
    reports.extend(failures.into_iter().map(|f| Outcome::Error(format!("{}: {}", f.regression_name, f.error))));

    let ok: Vec<CvReport> = reports.iter().filter_map(|r| r.ok().cloned()).collect();
    let partial = ok.len() < reports.len() || ok.iter().any(|r| r.steps.iter().any(|s| s.failure.is_some()));
    let output = CvOutput {
        manifest_digest: run.digest().to_string(),
        records_path: args.select.records.display().to_string(),
        min_train: args.min_train,
        reports,
        warnings,
    };
    run.write_csv(TRAJECTORY_FILE, &trajectory_csv(&ok))?;
    run.write_json(REPORT_FILE, &output)?;
    run.finish()?;
    for r in &output.reports {
        match r {
            Outcome::Ok(r) => println!(
                "{}: {} step(s), mean RMSE {}",
                r.regression_name,
                r.steps.len(),
                r.mean_rmse.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "n/a".into())
            ),
            Outcome::Error(e) => println!("error: {e}"),
        }
    }
    println!("cv report {}", out_dir.join(REPORT_FILE).display());
    Ok(if partial { Status::Partial } else { Status::Success })
}

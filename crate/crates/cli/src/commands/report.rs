use std::fmt::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

use super::fit::{FitReport, REPORT_FILE as FIT_FILE};
use super::{bc, cv, forecast, synth};
use crate::output::{read_input, Run};
use crate::{ReportArgs, Status};

pub const REPORT_FILE: &str = "report.txt";

fn optional_json(path: &Path) -> Result<Option<(Vec<u8>, Value)>> {
    if !path.exists() {
        return Ok(None);
    }
    let bytes = read_input(path)?;
    let value = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Some((bytes, value)))
}

fn num(v: &Value) -> String {
    v.as_f64().map(|x| format!("{x:.4e}")).unwrap_or_else(|| "n/a".into())
}

fn short(v: &Value) -> String {
    v.as_f64().map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn fit_section(out: &mut String, report: &FitReport) {
    let _ = writeln!(out, "== fit ({}, rule {}) ==", report.records_path, report.rule);
    for f in &report.fits {
        let _ = writeln!(out, "{} [{}]: {} records over {} budgets", f.metric, f.setting, f.records, f.budgets.len());
        if let Some(iso) = &f.isoflop {
            match iso.ok() {
                Some(i) => {
                    let ci = i.laws.n_law.exponent_ci95;
                    let _ = writeln!(
                        out,
                        "  isoflop    α = {:.4} ({:.4}, {:.4})  β = {:.4}  γ = {:.4}  [{} optima, {} skipped]",
                        i.alpha,
                        ci.0,
                        ci.1,
                        i.beta,
                        i.gamma,
                        i.laws.optima.len(),
                        i.laws.skipped.len()
                    );
                }
                None => {
                    let _ = writeln!(out, "  isoflop    failed: {}", iso.error().unwrap_or_default());
                }
            }
        }
        if let Some(par) = &f.parametric {
            match par.ok() {
                Some(p) => {
                    let a = &p.allocation;
                    let _ = writeln!(
                        out,
                        "  parametric α = {:.4} ({:.4}, {:.4})  β = {:.4} ({:.4}, {:.4})  R² = {:.4}",
                        a.alpha, a.alpha_ci95.0, a.alpha_ci95.1, a.beta, a.beta_ci95.0, a.beta_ci95.1, p.surface.r_squared
                    );
                }
                None => {
                    let _ = writeln!(out, "  parametric failed: {}", par.error().unwrap_or_default());
                }
            }
        }
        if let Some(d) = f.alpha_difference {
            let _ = writeln!(out, "  α difference (parametric − isoflop) = {d:.4}");
        }
        if let Some(fc) = &f.floor_check {
            match fc.crossing_budgets.first() {
                Some(c) => {
                    let _ = writeln!(out, "  law passes {} at C = {c:.4e}", fc.floor);
                }
                None => {
                    let _ = writeln!(out, "  law does not pass {}", fc.floor);
                }
            }
        }
    }
    if let Some(rl) = &report.return_loss_law {
        match rl.ok() {
            Some(l) => {
                let _ = writeln!(out, "return-loss law: δ = {:.4} over {} budgets (R² = {:.4})", l.delta, l.n, l.r_squared);
            }
            None => {
                let _ = writeln!(out, "return-loss law failed: {}", rl.error().unwrap_or_default());
            }
        }
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
}

pub fn run(out_dir: &Path, args: &ReportArgs) -> Result<Status> {
    let dir = args.dir.as_deref().unwrap_or(out_dir);
    let fit_path = dir.join(FIT_FILE);
    let fit_bytes = read_input(&fit_path).context("report needs a fit report; run `isoscale fit` first")?;
    let fit: FitReport =
        serde_json::from_slice(&fit_bytes).with_context(|| format!("{} is not a fit report", fit_path.display()))?;

    let mut inputs: Vec<(std::path::PathBuf, Vec<u8>)> = vec![(fit_path, fit_bytes)];
    let mut text = String::new();
    fit_section(&mut text, &fit);

    if let Some((bytes, truth)) = optional_json(&dir.join(synth::TRUTH_FILE))? {
        let t = &truth["truth"];
        let _ = writeln!(text, "\n== synthetic truth ==");
        let _ = writeln!(text, "α = {}  β = {}  γ = {}  δ = {}", short(&t["alpha"]), short(&t["beta"]), short(&t["gamma"]), short(&t["delta"]));
        inputs.push((dir.join(synth::TRUTH_FILE), bytes));
    }
    if let Some((bytes, summary)) = optional_json(&dir.join(bc::SUMMARY_FILE))? {
        let b = &summary["baselines"];
        let _ = writeln!(text, "\n== bc harness ==");
        let _ = writeln!(
            text,
            "expert return {} ± {}, random {} ± {}, best-return Spearman {}",
            short(&b["expert"]["mean"]),
            short(&b["expert"]["se"]),
            short(&b["random"]["mean"]),
            short(&b["random"]["se"]),
            short(&summary["best_return_spearman"])
        );
        inputs.push((dir.join(bc::SUMMARY_FILE), bytes));
    }
    if let Some((bytes, fc)) = optional_json(&dir.join(forecast::FORECAST_FILE))? {
        let _ = writeln!(text, "\n== forecast ({}) ==", fc["request"]["kind"].as_str().unwrap_or("?"));
        for f in fc["forecasts"].as_array().into_iter().flatten() {
            let _ = writeln!(
                text,
                "{} ({}): C = {}  N = {}  D = {}  warnings: {}",
                f["method"].as_str().unwrap_or("?"),
                f["basis"].as_str().unwrap_or("?"),
                num(&f["flops"]),
                num(&f["params"]),
                num(&f["samples"]),
                f["warnings"].as_array().map_or(0, |w| w.len())
            );
        }
        for u in fc["unavailable"].as_array().into_iter().flatten() {
            let _ = writeln!(text, "{} unavailable: {}", u["method"].as_str().unwrap_or("?"), u["reason"].as_str().unwrap_or("?"));
        }
        inputs.push((dir.join(forecast::FORECAST_FILE), bytes));
    }
    if let Some((bytes, cvr)) = optional_json(&dir.join(cv::REPORT_FILE))? {
        let _ = writeln!(text, "\n== cross-validation (min_train {}) ==", cvr["min_train"]);
        for r in cvr["reports"].as_array().into_iter().flatten() {
            if let Some(ok) = r.get("ok") {
                let _ = writeln!(
                    text,
                    "{}: {} step(s), mean RMSE {}",
                    ok["regression_name"].as_str().unwrap_or("?"),
                    ok["steps"].as_array().map_or(0, |s| s.len()),
                    num(&ok["mean_rmse"])
                );
            } else if let Some(e) = r.get("error") {
                let _ = writeln!(text, "error: {}", e.as_str().unwrap_or("?"));
            }
        }
        inputs.push((dir.join(cv::REPORT_FILE), bytes));
    }

    let refs: Vec<(&Path, &[u8])> = inputs.iter().map(|(p, b)| (p.as_path(), b.as_slice())).collect();
    let mut run = Run::new(out_dir, "report", serde_json::to_value(args)?, &refs);
    let body = format!("manifest_digest: {}\n\n{text}", run.digest());
    run.write(REPORT_FILE, body.as_bytes())?;
    run.finish()?;
    print!("{text}");
    Ok(Status::Success)
}

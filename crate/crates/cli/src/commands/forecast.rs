use std::path::Path;

use anyhow::{bail, Context, Result};
use isoscale::forecast::{
    forecast_from_return_law, forecast_isoflop_budget, forecast_isoflop_chain, forecast_parametric, Forecast,
    ForecastMethod,
};
use isoscale::Metric;
use serde::Serialize;

use super::fit::FitReport;
use crate::output::{read_input, Run};
use crate::{ForecastArgs, Status};

pub const FORECAST_FILE: &str = "forecast.json";

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Request {
    TargetReturn(f64),
    TargetLoss(f64),
    Budget(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    /// Metric whose fit produced the forecast.
    pub basis: Metric,
    #[serde(flatten)]
    pub forecast: Forecast,
}

#[derive(Debug, Clone, Serialize)]
pub struct Unavailable {
    pub method: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastOutput {
    pub manifest_digest: String,
    pub report_path: String,
    pub request: Request,
    pub forecasts: Vec<Entry>,
    pub unavailable: Vec<Unavailable>,
}

struct Collector {
    forecasts: Vec<Entry>,
    unavailable: Vec<Unavailable>,
}

impl Collector {
    fn push(&mut self, method: &str, basis: Metric, result: Result<Forecast, String>) {
        match result {
            Ok(forecast) => self.forecasts.push(Entry { basis, forecast }),
            Err(reason) => self.unavailable.push(Unavailable { method: method.into(), reason }),
        }
    }

    fn first_budget(&self) -> Option<f64> {
        self.forecasts.first().map(|e| e.forecast.flops)
    }
}

fn missing(what: &str) -> String {
    format!("report has no successful {what} fit")
}

/// Parametric allocation at a budget found by an isoFLOP forecast, so both
/// methods are compared at the same compute.
fn parametric_at(report: &FitReport, c: f64, source: &str) -> Result<Forecast, String> {
    let p = report.parametric(Metric::Loss).ok_or_else(|| missing("parametric loss"))?;
    let mut f = forecast_parametric(c, &p.surface, report.flop_denominator).map_err(|e| e.to_string())?;
    f.warnings.push(format!("budget taken from the {source} forecast"));
    Ok(f)
}

pub fn forecasts(report: &FitReport, request: &Request) -> (Vec<Entry>, Vec<Unavailable>) {
    let mut out = Collector { forecasts: Vec::new(), unavailable: Vec::new() };
    match *request {
        Request::TargetReturn(r) => {
            let chain = match (report.isoflop(Metric::Loss), report.return_loss_law.as_ref()) {
                (None, _) => Err(missing("isoFLOP loss")),
                (_, None) => Err("report has no return-loss law (fit with --metric all)".into()),
                (Some(loss), Some(rl)) => match rl.ok() {
                    Some(rl) => forecast_isoflop_chain(r, rl, &loss.laws).map_err(|e| e.to_string()),
                    None => Err(format!("return-loss law failed: {}", rl.error().unwrap_or_default())),
                },
            };
            out.push("isoflop_chain", Metric::Loss, chain);
            let direct = report
                .isoflop(Metric::Return)
                .ok_or_else(|| missing("isoFLOP return"))
                .and_then(|ret| forecast_from_return_law(r, &ret.laws).map_err(|e| e.to_string()));
            out.push("isoflop_return_law", Metric::Return, direct);
            match out.first_budget() {
                Some(c) => {
                    let source = format!("{:?}", out.forecasts[0].forecast.method).to_lowercase();
                    out.push("parametric", Metric::Loss, parametric_at(report, c, &source));
                }
                None => out.push("parametric", Metric::Loss, Err("no isoFLOP forecast to take a budget from".into())),
            }
        }
        Request::TargetLoss(l) => {
            let chain = report.isoflop(Metric::Loss).ok_or_else(|| missing("isoFLOP loss")).and_then(|loss| {
                let c = loss
                    .laws
                    .metric_law
                    .invert(l)
                    .ok_or_else(|| "loss-vs-FLOPs law is not invertible".to_string())?;
                let mut f = forecast_isoflop_budget(c, &loss.laws).map_err(|e| e.to_string())?;
                f.method = ForecastMethod::IsoflopChain;
                f.target = l;
                f.implied_loss = Some(l);
                Ok(f)
            });
            out.push("isoflop_chain", Metric::Loss, chain);
            match out.first_budget() {
                Some(c) => out.push("parametric", Metric::Loss, parametric_at(report, c, "isoflop_chain")),
                None => out.push("parametric", Metric::Loss, Err("no isoFLOP forecast to take a budget from".into())),
            }
        }
        Request::Budget(c) => {
            for m in [Metric::Loss, Metric::Return] {
                if report.fit(m).is_none() {
                    continue;
                }
                let iso = report
                    .isoflop(m)
                    .ok_or_else(|| missing(&format!("isoFLOP {m}")))
                    .and_then(|i| forecast_isoflop_budget(c, &i.laws).map_err(|e| e.to_string()));
                out.push(&format!("isoflop_budget ({m})"), m, iso);
                let par = report
                    .parametric(m)
                    .ok_or_else(|| missing(&format!("parametric {m}")))
                    .and_then(|p| forecast_parametric(c, &p.surface, report.flop_denominator).map_err(|e| e.to_string()));
                out.push(&format!("parametric ({m})"), m, par);
            }
        }
    }
    (out.forecasts, out.unavailable)
}

pub fn run(out_dir: &Path, args: &ForecastArgs) -> Result<Status> {
    let t = &args.target;
    let request = match (t.target_return, t.target_loss, t.budget) {
        (Some(r), None, None) => Request::TargetReturn(r),
        (None, Some(l), None) => Request::TargetLoss(l),
        (None, None, Some(c)) => Request::Budget(c),
        _ => bail!("give exactly one of --target-return, --target-loss, --budget"),
    };
    let value = match request {
        Request::TargetReturn(v) | Request::TargetLoss(v) | Request::Budget(v) => v,
    };
    if !(value > 0.0 && value.is_finite()) {
        bail!("forecast target must be positive and finite, got {value}");
    }
    let bytes = read_input(&args.report)?;
    let report: FitReport =
        serde_json::from_slice(&bytes).with_context(|| format!("{} is not a fit report", args.report.display()))?;
    let mut run = Run::new(out_dir, "forecast", serde_json::to_value(args)?, &[(args.report.as_path(), bytes.as_slice())]);

    let (forecasts, unavailable) = forecasts(&report, &request);
    if forecasts.is_empty() {
        let reasons: Vec<String> = unavailable.iter().map(|u| format!("{}: {}", u.method, u.reason)).collect();
        bail!("no forecast possible from {}: {}", args.report.display(), reasons.join("; "));
    }
    let output = ForecastOutput {
        manifest_digest: run.digest().to_string(),
        report_path: args.report.display().to_string(),
        request,
        forecasts,
        unavailable,
    };
    run.write_json(FORECAST_FILE, &output)?;
    run.finish()?;
    for e in &output.forecasts {
        let f = &e.forecast;
        println!(
            "{:?} ({}): C={:.4e} N={:.4e} D={:.4e}{}",
            f.method,
            e.basis,
            f.flops,
            f.params,
            f.samples,
            if f.warnings.is_empty() { String::new() } else { format!(" [{} warning(s)]", f.warnings.len()) }
        );
    }
    println!("forecast {}", out_dir.join(FORECAST_FILE).display());
    Ok(Status::Success)
}

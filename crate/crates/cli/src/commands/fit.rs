use std::path::Path;

use anyhow::Result;
use isoscale::forecast::{fit_return_loss, ReturnLossLaw};
use isoscale::isoflop::{approach1_laws, metric_floor_check, optima_csv, IsoflopLaws, Objective};
use isoscale::parametric::{allocation_law, fit_surface, AllocationLaw, QuadraticSurface};
use isoscale::{Metric, Setting};
use log::warn;
use serde::{Deserialize, Serialize};

use super::{load_records, select_all, Outcome, Selection};
use crate::output::Run;
use crate::svg::{loglog_chart, Series};
use crate::{FitArgs, Method, Status};

pub const REPORT_FILE: &str = "fit_report.json";
const CURVE_POINTS: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsoflopFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_plus_beta: f64,
    pub laws: IsoflopLaws,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParametricFit {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_plus_beta: f64,
    pub allocation: AllocationLaw,
    pub surface: QuadraticSurface,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloorCheck {
    pub floor: f64,
    /// Crossing budget first, then fitted budgets already past it.
    pub crossing_budgets: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricFit {
    pub metric: Metric,
    pub setting: Setting,
    pub records: usize,
    pub budgets: Vec<f64>,
    pub skipped_budgets: Vec<f64>,
    pub isoflop: Option<Outcome<IsoflopFit>>,
    pub parametric: Option<Outcome<ParametricFit>>,
    /// Parametric α minus isoFLOP α, when both fits succeeded.
    pub alpha_difference: Option<f64>,
    pub floor_check: Option<FloorCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub manifest_digest: String,
    pub records_path: String,
    pub method: Method,
    pub rule: String,
    pub flop_denominator: f64,
    pub skip_budgets: usize,
    pub budget_rel_tol: f64,
    pub fits: Vec<MetricFit>,
    /// `R_opt ∝ L_opt^δ` across budgets shared by the loss and return fits.
    pub return_loss_law: Option<Outcome<ReturnLossLaw>>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn fit(&self, metric: Metric) -> Option<&MetricFit> {
        self.fits.iter().find(|f| f.metric == metric)
    }

    pub fn isoflop(&self, metric: Metric) -> Option<&IsoflopFit> {
        self.fit(metric)?.isoflop.as_ref()?.ok()
    }

    pub fn parametric(&self, metric: Metric) -> Option<&ParametricFit> {
        self.fit(metric)?.parametric.as_ref()?.ok()
    }

    /// Every fit that was attempted and failed, as `(name, error)`.
    pub fn errors(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for f in &self.fits {
            if let Some(e) = f.isoflop.as_ref().and_then(|o| o.error()) {
                out.push((format!("{}.isoflop", f.metric), e.to_string()));
            }
            if let Some(e) = f.parametric.as_ref().and_then(|o| o.error()) {
                out.push((format!("{}.parametric", f.metric), e.to_string()));
            }
        }
        if let Some(e) = self.return_loss_law.as_ref().and_then(|o| o.error()) {
            out.push(("return_loss_law".into(), e.to_string()));
        }
        out
    }
}

fn fit_metric(sel: &Selection, args: &FitArgs, k: f64) -> MetricFit {
    let rule = args.select.rule.rule();
    let records = sel.records();
    let want_iso = matches!(args.method, Method::Isoflop | Method::Both);
    let want_par = matches!(args.method, Method::Parametric | Method::Both);

    let isoflop: Option<Outcome<IsoflopFit>> = want_iso.then(|| {
        approach1_laws(&sel.groups, Objective::from(sel.metric), &rule)
            .map(|laws| IsoflopFit {
                alpha: laws.alpha(),
                beta: laws.beta(),
                gamma: laws.gamma(),
                alpha_plus_beta: laws.alpha() + laws.beta(),
                laws,
            })
            .into()
    });
    let parametric: Option<Outcome<ParametricFit>> = want_par.then(|| {
        fit_surface(&records, sel.metric)
            .and_then(|surface| {
                let allocation = allocation_law(&surface, k)?;
                Ok(ParametricFit {
                    alpha: allocation.alpha,
                    beta: allocation.beta,
                    alpha_plus_beta: allocation.alpha + allocation.beta,
                    allocation,
                    surface,
                })
            })
            .into()
    });
    let iso_ok = isoflop.as_ref().and_then(|o| o.ok());
    let alpha_difference = match (iso_ok, parametric.as_ref().and_then(|o| o.ok())) {
        (Some(i), Some(p)) => Some(p.alpha - i.alpha),
        _ => None,
    };
    let floor = match sel.metric {
        Metric::Loss => args.loss_floor,
        Metric::Return => args.return_ceiling,
    };
    let floor_check = match (floor, iso_ok) {
        (Some(floor), Some(fit)) => Some(FloorCheck { floor, crossing_budgets: metric_floor_check(&fit.laws, floor) }),
        _ => None,
    };
    MetricFit {
        metric: sel.metric,
        setting: sel.setting,
        records: records.len(),
        budgets: sel.budgets(),
        skipped_budgets: sel.skipped_budgets.clone(),
        isoflop,
        parametric,
        alpha_difference,
        floor_check,
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

fn fmt(x: f64) -> String {
    isoscale::records::fmt_f64(x)
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// isoFLOP profile points, fitted parabolas, optima and law curves for one
/// metric, as CSV (and optionally SVG).
fn write_plots(run: &mut Run, sel: &Selection, fit: &MetricFit, svg: bool) -> Result<()> {
    let m = sel.metric;
    let profile_rows = sel.groups.iter().flat_map(|g| {
        g.records.iter().map(move |r| {
            vec![
                fmt(g.budget),
                r.params.to_string(),
                fmt(r.samples),
                fmt(r.flops),
                r.metric(m).map(fmt).unwrap_or_default(),
                r.seed.to_string(),
            ]
        })
    });
    let profiles = csv_text(&["budget", "params", "samples", "flops", m.as_str(), "seed"], profile_rows)?;
    run.write_csv(&format!("plots/{m}_profiles.csv"), &profiles)?;

    let iso = fit.isoflop.as_ref().and_then(|o| o.ok());
    let par = fit.parametric.as_ref().and_then(|o| o.ok());
    let mut parabola_series = Vec::new();
    if let Some(iso) = iso {
        let mut rows = Vec::new();
        for o in &iso.laws.optima {
            let Some(group) = sel.groups.iter().find(|g| g.budget == o.budget) else { continue };
            let lo = group.records.iter().map(|r| r.params).min().unwrap_or(1) as f64;
            let hi = group.records.iter().map(|r| r.params).max().unwrap_or(1) as f64;
            let curve: Vec<(f64, f64)> =
                log_space(lo, hi, CURVE_POINTS).into_iter().map(|n| (n, o.parabola.eval(n.log10()))).collect();
            rows.extend(curve.iter().map(|&(n, y)| vec![fmt(o.budget), fmt(n), fmt(y)]));
            parabola_series.push(Series { name: format!("C={:.2e}", o.budget), points: curve, line: true });
        }
        let text = csv_text(&["budget", "params", &format!("fitted_{m}")], rows)?;
        run.write_csv(&format!("plots/{m}_parabolas.csv"), &text)?;
        run.write_csv(&format!("plots/{m}_optima.csv"), &optima_csv(&iso.laws.optima))?;
    }

    let budgets = sel.budgets();
    let (lo, hi) = (budgets[0], budgets[budgets.len() - 1]);
    let grid = log_space(lo / 10.0, hi * 10.0, CURVE_POINTS);
    let mut law_rows = Vec::new();
    for &c in &grid {
        let mut row = vec![fmt(c)];
        match iso {
            Some(i) => row.extend([fmt(i.laws.n_law.predict(c)), fmt(i.laws.d_law.predict(c)), fmt(i.laws.metric_law.predict(c))]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        match par {
            Some(p) => {
                let (n, d) = p.allocation.allocate(c);
                row.extend([fmt(n), fmt(d)]);
            }
            None => row.extend([String::new(), String::new()]),
        }
        law_rows.push(row);
    }
    let header = [
        "flops",
        "isoflop_params",
        "isoflop_samples",
        &format!("isoflop_{m}"),
        "parametric_params",
        "parametric_samples",
    ];
    run.write_csv(&format!("plots/{m}_laws.csv"), &csv_text(&header, law_rows)?)?;

    if svg {
        let mut profile_series: Vec<Series> = sel
            .groups
            .iter()
            .map(|g| Series {
                name: format!("C={:.2e}", g.budget),
                points: g.records.iter().filter_map(|r| r.metric(m).map(|y| (r.params as f64, y))).collect(),
                line: false,
            })
            .collect();
        profile_series.extend(parabola_series);
        let chart = loglog_chart(&format!("isoFLOP profiles ({m})"), "parameters", m.as_str(), &profile_series, run.digest());
        run.write(&format!("plots/{m}_profiles.svg"), chart.as_bytes())?;

        let mut series = Vec::new();
        if let Some(i) = iso {
            series.push(Series { name: "N_opt".into(), points: i.laws.optima.iter().map(|o| (o.budget, o.n_opt)).collect(), line: false });
            series.push(Series { name: "D_opt".into(), points: i.laws.optima.iter().map(|o| (o.budget, o.d_opt)).collect(), line: false });
            series.push(Series { name: "N law".into(), points: grid.iter().map(|&c| (c, i.laws.n_law.predict(c))).collect(), line: true });
            series.push(Series { name: "D law".into(), points: grid.iter().map(|&c| (c, i.laws.d_law.predict(c))).collect(), line: true });
        }
        if let Some(p) = par {
            series.push(Series { name: "N parametric".into(), points: grid.iter().map(|&c| (c, p.allocation.allocate(c).0)).collect(), line: true });
            series.push(Series { name: "D parametric".into(), points: grid.iter().map(|&c| (c, p.allocation.allocate(c).1)).collect(), line: true });
        }
        let chart = loglog_chart(&format!("compute-optimal allocation ({m})"), "FLOPs", "parameters / samples", &series, run.digest());
        run.write(&format!("plots/{m}_allocation.svg"), chart.as_bytes())?;
    }
    Ok(())
}

pub fn run(out_dir: &Path, args: &FitArgs) -> Result<Status> {
    if args.select.budget_rel_tol.is_nan() {
        anyhow::bail!("--budget-rel-tol must be a number");
    }
    let loaded = load_records(&args.select.records)?;
    let mut warnings = loaded.warnings.clone();
    let selections = select_all(&loaded.records, &args.select, &mut warnings)?;
    let rule = args.select.rule.rule();
    let k = rule.denominator().expect("CLI rules are linear");
    let mut run = Run::new(
        out_dir,
        "fit",
        serde_json::to_value(args)?,
        &[(args.select.records.as_path(), loaded.bytes.as_slice())],
    );

    let fits: Vec<MetricFit> = selections.iter().map(|s| fit_metric(s, args, k)).collect();
    for f in &fits {
        if let Some(i) = f.isoflop.as_ref().and_then(|o| o.ok()) {
            warnings.extend(i.laws.warnings.iter().map(|w| format!("{} isoflop: {w}", f.metric)));
        }
        if let Some(p) = f.parametric.as_ref().and_then(|o| o.ok()) {
            warnings.extend(p.surface.warnings.iter().map(|w| format!("{} parametric: {w}", f.metric)));
        }
    }
    let iso = |m: Metric| fits.iter().find(|f| f.metric == m).and_then(|f| f.isoflop.as_ref()?.ok());
    let return_loss_law = match (iso(Metric::Loss), iso(Metric::Return)) {
        (Some(l), Some(r)) => Some(fit_return_loss(&l.laws.optima, &r.laws.optima).into()),
        _ => None,
    };

    let report = FitReport {
        manifest_digest: run.digest().to_string(),
        records_path: args.select.records.display().to_string(),
        method: args.method,
        rule: rule.to_string(),
        flop_denominator: k,
        skip_budgets: args.select.skip_budgets,
        budget_rel_tol: args.select.budget_rel_tol,
        fits,
        return_loss_law,
        warnings,
    };
    for (sel, fit) in selections.iter().zip(&report.fits) {
        write_plots(&mut run, sel, fit, args.svg)?;
    }
    run.write_json(REPORT_FILE, &report)?;
    run.finish()?;

    for f in &report.fits {
        let iso = f.isoflop.as_ref().and_then(|o| o.ok()).map(|i| format!("isoflop α={:.4} β={:.4}", i.alpha, i.beta));
        let par = f.parametric.as_ref().and_then(|o| o.ok()).map(|p| format!("parametric α={:.4} β={:.4}", p.alpha, p.beta));
        let parts: Vec<String> = [iso, par].into_iter().flatten().collect();
        println!("{}: {}", f.metric, if parts.is_empty() { "no successful fit".into() } else { parts.join(", ") });
    }
    println!("report {}", out_dir.join(REPORT_FILE).display());
    let errors = report.errors();
    for (name, e) in &errors {
        warn!("{name} failed: {e}");
    }
    Ok(if errors.is_empty() { Status::Success } else { Status::Partial })
}

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always print. Pass
//! criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p isoscale-cli --test acceptance -- 1 5`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bcdesk::env::generate_expert_dataset;
use bcdesk::{run_isoflop_experiment, BcConfig, BcPolicy};
use isoscale::crossval::rolling_cv;
use isoscale::flops::{conv_forward_flops, conv_training_flops_per_sample, rule_flops, samples_for_budget};
use isoscale::forecast::{fit_return_loss, forecast_from_return_law, forecast_isoflop_chain};
use isoscale::isoflop::{approach1_laws, IsoflopLaws, Objective};
use isoscale::numerics::spearman;
use isoscale::parametric::{
    allocation_law, alpha_beta, constrained_search, exponent_gradient, fit_surface, optimal_allocation, Direction,
    Exponent, QuadraticSurface,
};
use isoscale::records::{group_by_budget, DEFAULT_BUDGET_REL_TOL};
use isoscale::synth::{analytic_optima, generate, SynthSpec, SynthTruth};
use isoscale::{ConvLayerSpec, ExperimentRecord, FlopRule, Metric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn random_surface(rng: &mut ChaCha8Rng) -> QuadraticSurface {
    // Curvatures span weakly curved, fitted-looking surfaces up to sharp ones.
    let bn2: f64 = 10f64.powf(rng.random_range(-2.7..0.0));
    let bd2: f64 = 10f64.powf(rng.random_range(-2.7..0.0));
    let bnd = rng.random_range(-0.9..0.9) * bn2.min(bd2);
    QuadraticSurface::from_coeffs(
        [
            rng.random_range(-2.0..30.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            bn2,
            bnd,
            bd2,
        ],
        Direction::Minimize,
    )
}

fn laws(records: &[ExperimentRecord], objective: Objective, rule: &FlopRule) -> Option<IsoflopLaws> {
    let groups = group_by_budget(records, DEFAULT_BUDGET_REL_TOL).ok()?;
    approach1_laws(&groups, objective, rule).ok()
}

fn six_budget_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        budgets: (0..6).map(|i| 10f64.powf(14.0 + 0.6 * i as f64)).collect(),
        seed,
        ..SynthSpec::default()
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let surfaces = 200;
    let mut worst = 0.0f64;
    let mut boundary = 0;
    for _ in 0..surfaces {
        let s = random_surface(&mut rng);
        let c = 10f64.powf(rng.random_range(12.0..20.0));
        let (n, _) = optimal_allocation(&s, c, 6.0).expect("valid surface");
        let found = constrained_search(&s, c, 6.0, 2000).expect("search");
        worst = worst.max((n.ln() - found.n.ln()).abs());
        boundary += found.at_boundary as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-3 && boundary == 0 && secs < 10.0,
        format!("{surfaces} surfaces, max |Δ ln N| = {worst:.2e} (< 1e-3), {boundary} boundary hits, {secs:.2}s (< 10s)"),
    )
}

/// Published BC exponent pairs from the reference text, as `(α, β)` tuples.
fn reference_table_pairs() -> Option<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(workspace_root().join("paper.md")).ok()?;
    let mut pairs = Vec::new();
    for line in text.lines().filter(|l| l.contains("BC Loss &") || l.contains("BC Return &")) {
        let values: Vec<f64> = line
            .split('&')
            .skip(1)
            .filter_map(|cell| cell.trim().split("{}").next()?.trim().parse().ok())
            .collect();
        for pair in values.chunks(2) {
            if let [a, b] = pair {
                pairs.push((*a, *b));
            }
        }
    }
    Some(pairs)
}

fn criterion_2() -> Verdict {
    let mut worst_par = 0.0f64;
    let mut worst_iso = 0.0f64;
    let mut fits = 0;
    for seed in 0..30 {
        let records = generate(&SynthSpec { seed, ..SynthSpec::default() }).unwrap();
        for metric in [Metric::Loss, Metric::Return] {
            let surface = fit_surface(&records, metric).unwrap();
            let law = allocation_law(&surface, 6.0).unwrap();
            worst_par = worst_par.max((law.alpha + law.beta - 1.0).abs());
            let objective = Objective::from(metric);
            for rule in [FlopRule::LinearBc, FlopRule::LinearRl] {
                if let Some(l) = laws(&records, objective, &rule) {
                    worst_iso = worst_iso.max((l.alpha() + l.beta() - 1.0).abs());
                    fits += 1;
                }
            }
        }
    }
    let table = reference_table_pairs().unwrap_or_default();
    let table_ok = table.len() == 4 && table.iter().all(|(a, b)| (a + b - 1.0).abs() < 0.005);
    verdict(
        worst_par <= 1e-14 && worst_iso <= 1e-10 && fits >= 100 && table_ok,
        format!(
            "parametric max |α+β−1| = {worst_par:.1e} (≤ 1e-14), isoFLOP max = {worst_iso:.1e} over {fits} fits (≤ 1e-10), reference rows {table:?}"
        ),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let trials = 50;
    let truth = analytic_optima(&six_budget_spec(0)).unwrap().alpha;
    let (mut par_ok, mut iso_ok) = (0, 0);
    for seed in 0..trials {
        let records = generate(&six_budget_spec(seed)).unwrap();
        assert_eq!(records.len(), 54);
        let surface = fit_surface(&records, Metric::Loss).unwrap();
        if (alpha_beta(&surface).unwrap().alpha - truth).abs() <= 0.03 {
            par_ok += 1;
        }
        if let Some(l) = laws(&records, Objective::MinLoss, &FlopRule::LinearBc) {
            if (l.alpha() - truth).abs() <= 0.10 {
                iso_ok += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let need = (0.9 * trials as f64).ceil() as usize;
    verdict(
        par_ok >= need && iso_ok >= need && secs < 30.0,
        format!("true α = {truth:.3}; parametric ±0.03 in {par_ok}/{trials}, isoFLOP ±0.10 in {iso_ok}/{trials} (need {need}), {secs:.2}s (< 30s)"),
    )
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let s = random_surface(&mut rng);
        for which in [Exponent::Alpha, Exponent::Beta] {
            let grad = exponent_gradient(&s, which);
            let value = |coeffs: [f64; 6]| {
                let e = alpha_beta(&QuadraticSurface::from_coeffs(coeffs, Direction::Minimize)).unwrap();
                match which {
                    Exponent::Alpha => e.alpha,
                    Exponent::Beta => e.beta,
                }
            };
            for j in 0..6 {
                let base = s.coeffs();
                let h = 1e-6 * base[j].abs().max(1e-3);
                let (mut up, mut down) = (base, base);
                up[j] += h;
                down[j] -= h;
                let fd = (value(up) - value(down)) / (2.0 * h);
                let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
                worst = worst.max((fd - grad[j]).abs() / scale);
            }
        }
    }
    let spec = SynthSpec::default();
    let truth = analytic_optima(&spec).unwrap().alpha;
    let trials = 500;
    let covered = (0..trials)
        .filter(|&seed| {
            let records = generate(&SynthSpec { seed, ..spec.clone() }).unwrap();
            let law = allocation_law(&fit_surface(&records, Metric::Loss).unwrap(), 6.0).unwrap();
            law.alpha_ci95.0 <= truth && truth <= law.alpha_ci95.1
        })
        .count();
    let rate = covered as f64 / trials as f64;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-5 && (0.90..=0.98).contains(&rate) && secs < 60.0,
        format!("gradient max rel error {worst:.1e} (≤ 1e-5) on 50 surfaces; α coverage {covered}/{trials} = {rate:.3} (in [0.90, 0.98]); {secs:.2}s (< 60s)"),
    )
}

fn criterion_5() -> Verdict {
    let laws: [(f64, f64); 4] = [(2.0, 0.5), (1e-3, 0.73), (50.0, -0.3), (7.0, 1.2)];
    let mut worst = 0.0f64;
    let mut steps_ok = true;
    for (a, b) in laws {
        let points: Vec<(f64, f64)> = (0..9).map(|i| {
            let x = 10f64.powf(13.0 + 0.5 * i as f64);
            (x, a * x.powf(b))
        }).collect();
        let report = rolling_cv("law", &points, 6).unwrap();
        for s in &report.steps {
            worst = worst.max(s.rmse.unwrap_or(f64::INFINITY) / s.actual.abs());
        }
        let seven = rolling_cv("law", &points[..7], 6).unwrap();
        steps_ok &= seven.steps.len() == 1 && seven.steps[0].train_size == 6 && report.steps.len() == 3;
    }
    verdict(
        worst <= 1e-6 && steps_ok,
        format!("max relative step RMSE {worst:.1e} (≤ 1e-6); 7 points with min_train 6 give one step: {steps_ok}"),
    )
}

fn criterion_6() -> Verdict {
    let spec = SynthSpec::default();
    let c_star = spec.budgets[3];
    let target = SynthTruth::optimum_at(&spec, c_star).unwrap().return_opt;
    let far = SynthTruth::optimum_at(&spec, 1e20).unwrap().return_opt;
    let seeds = 20;
    let (mut chain_ok, mut direct_ok, mut warned) = (0, 0, 0);
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let records = generate(&SynthSpec { seed, ..spec.clone() }).unwrap();
        let loss = laws(&records, Objective::MinLoss, &FlopRule::LinearBc).expect("loss laws");
        let ret = laws(&records, Objective::MaxReturn, &FlopRule::LinearBc).expect("return laws");
        let rl = fit_return_loss(&loss.optima, &ret.optima).unwrap();
        let chain = forecast_isoflop_chain(target, &rl, &loss).unwrap();
        let direct = forecast_from_return_law(target, &ret).unwrap();
        for (f, ok) in [(&chain, &mut chain_ok), (&direct, &mut direct_ok)] {
            let err = (f.flops / c_star - 1.0).abs();
            worst = worst.max(err);
            if err <= 0.05 {
                *ok += 1;
            }
        }
        let far_chain = forecast_isoflop_chain(far, &rl, &loss).unwrap();
        let far_direct = forecast_from_return_law(far, &ret).unwrap();
        if !far_chain.warnings.is_empty() && !far_direct.warnings.is_empty() {
            warned += 1;
        }
    }
    verdict(
        chain_ok == seeds && direct_ok == seeds && warned == seeds,
        format!(
            "budget {c_star:.3e} recovered within 5% by chain in {chain_ok}/{seeds}, by return law in {direct_ok}/{seeds} (worst {:.2}%); far-target warnings {warned}/{seeds}",
            100.0 * worst
        ),
    )
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let validation = generate_expert_dataset(100, 1_000_000);
    let zero_loss = BcPolicy::zeros(16).loss(&validation.observations, &validation.actions);
    let zero_ok = (zero_loss - 4f64.ln()).abs() <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_grad = 0.0f64;
    for trial in 0..5 {
        let mut policy = BcPolicy::init(8 + trial, 0.5, &mut rng);
        for p in policy.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let batch: Vec<usize> = (0..32).map(|_| rng.random_range(0..validation.len())).collect();
        let obs: Vec<_> = batch.iter().map(|&i| validation.observations[i].clone()).collect();
        let acts: Vec<u8> = batch.iter().map(|&i| validation.actions[i]).collect();
        let mut grad = Vec::new();
        policy.loss_and_grad(&validation.observations, &validation.actions, &batch, &mut grad);
        let h = 1e-5;
        for j in policy.softmax_layer() {
            let mut up = policy.clone();
            up.params_mut()[j] += h;
            let mut down = policy.clone();
            down.params_mut()[j] -= h;
            let fd = (up.loss(&obs, &acts) - down.loss(&obs, &acts)) / (2.0 * h);
            worst_grad = worst_grad.max((fd - grad[j]).abs() / grad[j].abs().max(1e-3));
        }
    }

    let config = BcConfig::default();
    let out = match run_isoflop_experiment(&config) {
        Ok(out) => out,
        Err(e) => return verdict(false, format!("default sweep failed: {e}")),
    };
    let best: Vec<(f64, f64)> = config
        .budgets
        .iter()
        .map(|&c| {
            let best = config
                .widths
                .iter()
                .map(|&w| {
                    let r: Vec<f64> = out
                        .cells
                        .iter()
                        .filter(|x| x.nominal_budget == c && x.width == w)
                        .map(|x| x.mean_return.mean)
                        .collect();
                    r.iter().sum::<f64>() / r.len().max(1) as f64
                })
                .fold(f64::NEG_INFINITY, f64::max);
            (c, best)
        })
        .collect();
    let xs: Vec<f64> = best.iter().map(|b| b.0).collect();
    let ys: Vec<f64> = best.iter().map(|b| b.1).collect();
    let rho = spearman(&xs, &ys);
    let expert = out.baselines.expert;
    let over = out
        .cells
        .iter()
        .filter(|c| c.mean_return.mean > expert.mean + 2.0 * (c.mean_return.se.powi(2) + expert.se.powi(2)).sqrt())
        .count();
    let secs = start.elapsed().as_secs_f64();
    let full = out.cells.len() == config.widths.len() * config.budgets.len() * config.seeds.len();
    verdict(
        zero_ok && worst_grad <= 1e-4 && rho >= 0.8 && over == 0 && full && secs < 900.0,
        format!(
            "zero-policy loss {zero_loss:.9} (ln 4 ± 1e-6); softmax grad max rel err {worst_grad:.1e} (≤ 1e-4); \
             {}×{}×{} sweep best returns {:?} Spearman {rho:.2} (≥ 0.8); expert {:.3} ± {:.3}, cells above ceiling {over}; {secs:.0}s (< 900s)",
            config.widths.len(),
            config.budgets.len(),
            config.seeds.len(),
            ys.iter().map(|y| (y * 100.0).round() / 100.0).collect::<Vec<_>>(),
            expert.mean,
            expert.se
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut exact = true;
    let mut worst_ulps = 0u64;
    for _ in 0..10_000 {
        for rule in [FlopRule::LinearBc, FlopRule::LinearRl] {
            // Integer counts with an exactly representable budget.
            let n = rng.random_range(1u64..1 << 24) as f64;
            let d = rng.random_range(1u64..1 << 24) as f64;
            let c = rule_flops(&rule, n, d).unwrap();
            exact &= samples_for_budget(&rule, c, n).unwrap() == d;
            // Arbitrary reals.
            let n = 10f64.powf(rng.random_range(0.0..12.0));
            let d = 10f64.powf(rng.random_range(0.0..14.0));
            let back = samples_for_budget(&rule, rule_flops(&rule, n, d).unwrap(), n).unwrap();
            worst_ulps = worst_ulps.max(back.to_bits().abs_diff(d.to_bits()));
        }
    }
    let layer = ConvLayerSpec { h_out: 20, w_out: 20, c_out: 16, k: 3, c_in: 8 };
    let forward = conv_forward_flops(&layer).unwrap();
    let training = conv_training_flops_per_sample(&[layer]).unwrap();
    verdict(
        exact && worst_ulps <= 1 && forward == 921_600.0 && training == 3.0 * forward,
        format!(
            "integer round-trips exact: {exact}; real round-trips within {worst_ulps} ulp; conv forward {forward} (921600), training {training} (3× forward)"
        ),
    )
}

fn run_cli(out_dir: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_isoscale"))
        .args(args)
        .env("ISOSCALE_OUT_DIR", out_dir)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&status.stderr).into_owned())
    }
}

fn criterion_9() -> Verdict {
    let root = workspace_root();
    let bc_config = root.join("configs/bc_quick.json");
    let dirs: Vec<tempfile::TempDir> = (0..4).map(|_| tempfile::tempdir().unwrap()).collect();
    let runs = [
        (&dirs[0], vec!["synth"], "records.jsonl"),
        (&dirs[1], vec!["synth"], "records.jsonl"),
        (&dirs[2], vec!["bc-run", bc_config.to_str().unwrap()], "bc_records.jsonl"),
        (&dirs[3], vec!["bc-run", bc_config.to_str().unwrap()], "bc_records.jsonl"),
    ];
    let mut files = Vec::new();
    for (dir, args, name) in &runs {
        if let Err(e) = run_cli(dir.path(), args) {
            return verdict(false, format!("`isoscale {}` failed: {e}", args.join(" ")));
        }
        files.push(std::fs::read(dir.path().join(name)).unwrap());
    }
    let synth_same = files[0] == files[1] && !files[0].is_empty();
    let bc_same = files[2] == files[3] && !files[2].is_empty();
    verdict(
        synth_same && bc_same,
        format!("synth records byte-identical: {synth_same}; bc-run records byte-identical: {bc_same}"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 9] = [
        (1, "closed form vs brute force", criterion_1),
        (2, "exponent identity", criterion_2),
        (3, "synthetic recovery", criterion_3),
        (4, "delta-method validity", criterion_4),
        (5, "cross-validation", criterion_5),
        (6, "forecast closure", criterion_6),
        (7, "BC harness", criterion_7),
        (8, "FLOP accounting", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = std::panic::catch_unwind(check).unwrap_or_else(|_| verdict(false, "panicked"));
        let elapsed: Duration = start.elapsed();
        println!(
            "criterion {id} ({name}): {} [{:.1}s] {}",
            if v.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

//! End-to-end checks of the estimators against synthetic ground truth.

use isoscale::crossval::{rolling_cv, DEFAULT_MIN_TRAIN};
use isoscale::forecast::{
    fit_return_loss, forecast_from_return_law, forecast_isoflop_budget, forecast_isoflop_chain, forecast_parametric,
};
use isoscale::isoflop::{approach1_laws, metric_floor_check, IsoflopLaws, Objective};
use isoscale::numerics::mean_and_se;
use isoscale::parametric::{allocation_law, alpha_beta, fit_surface, QuadraticSurface};
use isoscale::records::{group_by_budget, ExperimentRecord, Metric, DEFAULT_BUDGET_REL_TOL};
use isoscale::synth::{analytic_optima, generate, SynthSpec, SynthTruth, TrueSurface};
use isoscale::FlopRule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn laws(records: &[ExperimentRecord], objective: Objective) -> IsoflopLaws {
    let groups = group_by_budget(records, DEFAULT_BUDGET_REL_TOL).unwrap();
    approach1_laws(&groups, objective, &FlopRule::LinearBc).unwrap()
}

fn surface(records: &[ExperimentRecord]) -> QuadraticSurface {
    fit_surface(records, Metric::Loss).unwrap()
}

#[test]
fn surface_coefficients_within_three_standard_errors() {
    let truth = SynthSpec::default().surface.to_surface().coeffs();
    let trials = 200;
    let mut within = [0usize; 6];
    for seed in 0..trials {
        let records = generate(&SynthSpec { seed, ..SynthSpec::default() }).unwrap();
        let fit = surface(&records);
        for (j, (got, want)) in fit.coeffs().iter().zip(truth).enumerate() {
            if (got - want).abs() <= 3.0 * fit.covariance[j][j].sqrt() {
                within[j] += 1;
            }
        }
    }
    for (j, w) in within.iter().enumerate() {
        assert!(*w as f64 >= 0.95 * trials as f64, "coefficient {j}: {w}/{trials}");
    }
}

#[test]
fn alpha_interval_coverage() {
    let truth = analytic_optima(&SynthSpec::default()).unwrap();
    let trials = 500;
    let covered = (0..trials)
        .filter(|&seed| {
            let records = generate(&SynthSpec { seed, ..SynthSpec::default() }).unwrap();
            let law = allocation_law(&surface(&records), 6.0).unwrap();
            law.alpha_ci95.0 <= truth.alpha && truth.alpha <= law.alpha_ci95.1
        })
        .count();
    let rate = covered as f64 / trials as f64;
    assert!((0.90..=0.98).contains(&rate), "coverage {rate}");
}

#[test]
fn both_approaches_recover_alpha() {
    let truth = analytic_optima(&SynthSpec::default()).unwrap();
    let (mut parametric_hits, mut isoflop_hits) = (0, 0);
    for seed in 0..50 {
        let records = generate(&SynthSpec { seed, ..SynthSpec::default() }).unwrap();
        let e = alpha_beta(&surface(&records)).unwrap();
        assert!((e.alpha + e.beta - 1.0).abs() <= 1e-14);
        if (e.alpha - truth.alpha).abs() <= 0.03 {
            parametric_hits += 1;
        }
        let l = laws(&records, Objective::MinLoss);
        assert!((l.alpha() + l.beta() - 1.0).abs() <= 1e-10);
        if (l.alpha() - truth.alpha).abs() <= 0.10 {
            isoflop_hits += 1;
        }
    }
    assert!(parametric_hits >= 45, "parametric {parametric_hits}/50");
    assert!(isoflop_hits >= 45, "isoflop {isoflop_hits}/50");
}

#[test]
fn isoflop_alpha_on_symmetric_cobb_douglas() {
    let spec = SynthSpec {
        surface: TrueSurface { b0: 5.0, bn: -0.2, bd: -0.248, bn2: 0.004, bnd: 0.0, bd2: 0.004 },
        noise_sigma: 0.0,
        ..SynthSpec::default()
    };
    assert_eq!(analytic_optima(&spec).unwrap().alpha, 0.5);
    let l = laws(&generate(&spec).unwrap(), Objective::MinLoss);
    assert!((0.45..=0.55).contains(&l.alpha()), "alpha {}", l.alpha());
}

#[test]
fn noise_free_loss_exponent_matches_truth() {
    let spec = SynthSpec { noise_sigma: 0.0, ..SynthSpec::default() };
    let truth = analytic_optima(&spec).unwrap();
    let l = laws(&generate(&spec).unwrap(), Objective::MinLoss);
    assert!((l.gamma() - truth.gamma).abs() < 1e-3, "{} vs {}", l.gamma(), truth.gamma);
}

#[test]
fn return_loss_exponent_recovered() {
    let spec = SynthSpec::default();
    let records = generate(&spec).unwrap();
    let rl = fit_return_loss(
        &laws(&records, Objective::MinLoss).optima,
        &laws(&records, Objective::MaxReturn).optima,
    )
    .unwrap();
    assert!((rl.delta / spec.return_delta - 1.0).abs() <= 0.10, "delta {}", rl.delta);
    assert!(rl.warnings.is_empty());
}

#[test]
fn forecasts_recover_generating_budget() {
    // At σ = 0.001 both C and the allocation stay within 5%; at the default
    // σ = 0.01 only C does (the N and D laws absorb the extra noise).
    for (sigma, check_allocation) in [(0.001, true), (0.01, false)] {
        for seed in 0..20 {
            let spec = SynthSpec { seed, noise_sigma: sigma, ..SynthSpec::default() };
            let truth = analytic_optima(&spec).unwrap();
            let records = generate(&spec).unwrap();
            let loss_laws = laws(&records, Objective::MinLoss);
            let return_laws = laws(&records, Objective::MaxReturn);
            let rl = fit_return_loss(&loss_laws.optima, &return_laws.optima).unwrap();
            for o in &truth.optima {
                let chain = forecast_isoflop_chain(o.return_opt, &rl, &loss_laws).unwrap();
                let direct = forecast_from_return_law(o.return_opt, &return_laws).unwrap();
                for f in [&chain, &direct] {
                    assert!((f.flops / o.budget - 1.0).abs() <= 0.05, "σ {sigma} seed {seed}: {f:?}");
                    assert!(f.warnings.is_empty(), "{:?}", f.warnings);
                }
                if check_allocation {
                    assert!((chain.params / o.n_opt - 1.0).abs() <= 0.05);
                    assert!((chain.samples / o.d_opt - 1.0).abs() <= 0.05);
                }
            }
        }
    }
}

#[test]
fn forecasts_far_beyond_range_warn_and_stay_monotone() {
    let spec = SynthSpec::default();
    let records = generate(&spec).unwrap();
    let loss_laws = laws(&records, Objective::MinLoss);
    let return_laws = laws(&records, Objective::MaxReturn);
    let rl = fit_return_loss(&loss_laws.optima, &return_laws.optima).unwrap();
    let far = SynthTruth::optimum_at(&spec, 1e20).unwrap();
    let f = forecast_isoflop_chain(far.return_opt, &rl, &loss_laws).unwrap();
    assert!(f.extrapolation_decades > 1.0);
    assert!(f.warnings.iter().any(|w| w.contains("decades beyond")));

    let mut last = 0.0;
    for target in [5.0, 10.0, 50.0, 100.0, 500.0, 1e4] {
        let c = forecast_isoflop_chain(target, &rl, &loss_laws).unwrap().flops;
        assert!(c > last);
        last = c;
    }
}

#[test]
fn parametric_and_isoflop_allocations_agree_within_factor_three() {
    let spec = SynthSpec::default();
    let records = generate(&spec).unwrap();
    let s = surface(&records);
    let loss_laws = laws(&records, Objective::MinLoss);
    for &c in &spec.budgets {
        let p = forecast_parametric(c, &s, 6.0).unwrap();
        let i = forecast_isoflop_budget(c, &loss_laws).unwrap();
        assert!((p.params * p.samples * 6.0 / c - 1.0).abs() < 1e-10);
        let ratio = p.params / i.params;
        assert!((1.0 / 3.0..=3.0).contains(&ratio), "N ratio {ratio}");
        let ratio = p.samples / i.samples;
        assert!((1.0 / 3.0..=3.0).contains(&ratio), "D ratio {ratio}");
    }
}

#[test]
fn return_ceiling_crossing_matches_saturation() {
    let base = SynthSpec { noise_sigma: 0.0, ..SynthSpec::default() };
    // Put the ceiling where the true optimal return sits at C = 10^16.3.
    let ceiling = SynthTruth::optimum_at(&base, 10f64.powf(16.3)).unwrap().return_opt;
    let spec = SynthSpec { return_ceiling: Some(ceiling), ..base };
    let truth = analytic_optima(&spec).unwrap();
    let records = generate(&spec).unwrap();
    let unsaturated: Vec<ExperimentRecord> = records
        .into_iter()
        .filter(|r| r.flops < truth.saturation_budget.unwrap())
        .collect();
    let return_laws = laws(&unsaturated, Objective::MaxReturn);
    let crossing = metric_floor_check(&return_laws, ceiling);
    let predicted = crossing.first().copied().expect("law should reach the ceiling");
    let decades = (predicted / truth.saturation_budget.unwrap()).log10().abs();
    assert!(decades <= 0.5, "crossing {predicted:e}, saturation {:e}", truth.saturation_budget.unwrap());
}

#[test]
fn estimator_spread_grows_with_noise() {
    let spread = |sigma: f64| {
        let alphas: Vec<f64> = (0..40)
            .map(|seed| {
                let records = generate(&SynthSpec { seed, noise_sigma: sigma, ..SynthSpec::default() }).unwrap();
                alpha_beta(&surface(&records)).unwrap().alpha
            })
            .collect();
        let mean = alphas.iter().sum::<f64>() / alphas.len() as f64;
        alphas.iter().map(|a| (a - mean).powi(2)).sum::<f64>().sqrt()
    };
    let (s0, s1, s2) = (spread(0.0), spread(0.01), spread(0.1));
    assert!(s0 <= s1 && s1 <= s2, "{s0} {s1} {s2}");
    assert!(s0 < 1e-12);
}

fn noisy_power_law(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut pts = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    for i in 0..n {
        let x = 10f64.powf(12.0 + 0.25 * i as f64);
        let y = 1e-3 * x.powf(0.55);
        let eps: f64 = StandardNormal.sample(rng);
        pts.push((x, y * (sigma * eps).exp()));
        clean.push(y);
    }
    (pts, clean)
}

#[test]
fn cv_error_tracks_noise_scale() {
    let sigma = 0.05;
    let mut ratios = Vec::new();
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pts, clean) = noisy_power_law(&mut rng, 10, sigma);
        let report = rolling_cv("params", &pts, DEFAULT_MIN_TRAIN).unwrap();
        let scale = report.steps.iter().map(|s| sigma * clean[s.eval_index]).sum::<f64>() / report.steps.len() as f64;
        ratios.push(report.mean_rmse.unwrap() / scale);
    }
    let (mean, _) = mean_and_se(&ratios);
    assert!((0.5..=2.0).contains(&mean), "mean ratio {mean}");
}

#[test]
fn cv_slope_trajectory_converges() {
    let trials = 100;
    let converged = (0..trials)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (pts, _) = noisy_power_law(&mut rng, 20, 0.05);
            let report = rolling_cv("params", &pts, DEFAULT_MIN_TRAIN).unwrap();
            let first = report.steps.first().unwrap().b1.unwrap();
            let last = report.steps.last().unwrap().b1.unwrap();
            (last - 0.55).abs() <= (first - 0.55).abs()
        })
        .count();
    assert!(converged as f64 >= 0.8 * trials as f64, "{converged}/{trials}");
}

#[test]
fn noise_free_cv_on_fitted_optima() {
    let spec = SynthSpec {
        noise_sigma: 0.0,
        budgets: (0..7).map(|i| 10f64.powf(14.0 + 0.5 * i as f64)).collect(),
        ..SynthSpec::default()
    };
    let l = laws(&generate(&spec).unwrap(), Objective::MinLoss);
    let pts: Vec<(f64, f64)> = l.optima.iter().map(|o| (o.budget, o.n_opt)).collect();
    let report = rolling_cv("params", &pts, DEFAULT_MIN_TRAIN).unwrap();
    assert_eq!(report.steps.len(), 1);
}

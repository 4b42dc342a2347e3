//! Ground-truth synthetic experiment logs.
//!
//! Records are sampled from a known quadratic log-loss surface on a budget ×
//! model-size grid, with lognormal noise, and a return attached through a
//! power law in the loss. [`analytic_optima`] gives the exact quantities the
//! fitting pipeline should recover.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(spec.seed)`.
//! Draws are taken in budget-major, model-minor order: one standard normal
//! for the loss, then one for the return.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{fit_power_law, PowerLaw};
use crate::parametric::{alpha_beta, optimal_allocation, Direction, ParametricError, QuadraticSurface};
use crate::records::{ExperimentRecord, Setting};

/// Generator specs whose surface has `|denom|` below this are rejected.
pub const MIN_ABS_DENOM: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Parametric(#[from] ParametricError),
}

/// Coefficients of the true log-loss surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueSurface {
    pub b0: f64,
    pub bn: f64,
    pub bd: f64,
    pub bn2: f64,
    pub bnd: f64,
    pub bd2: f64,
}

impl TrueSurface {
    pub fn to_surface(self) -> QuadraticSurface {
        QuadraticSurface::from_coeffs(
            [self.b0, self.bn, self.bd, self.bn2, self.bnd, self.bd2],
            Direction::Minimize,
        )
    }
}

fn default_domain() -> String {
    "synth".to_string()
}

fn default_setting() -> Setting {
    Setting::BcLoss
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub surface: TrueSurface,
    /// `R = return_prefactor · L^return_delta`.
    pub return_delta: f64,
    pub return_prefactor: f64,
    pub budgets: Vec<f64>,
    pub model_grid: Vec<u64>,
    /// Lognormal σ on the loss.
    pub noise_sigma: f64,
    /// Lognormal σ on the return; defaults to `noise_sigma`.
    #[serde(default)]
    pub return_noise_sigma: Option<f64>,
    /// Returns are clipped at this value when set.
    #[serde(default)]
    pub return_ceiling: Option<f64>,
    pub seed: u64,
    pub flop_denominator: f64,
    #[serde(default = "default_domain")]
    pub domain: String,
    #[serde(default = "default_setting")]
    pub setting: Setting,
}

impl Default for SynthSpec {
    /// Seven budgets from 1e14 to 1e17 and nine model sizes spaced 0.625
    /// decades apart from 10^3.5, on a surface with α = 0.55, G = e⁻⁵ and
    /// an optimal-loss exponent near −0.6.
    fn default() -> Self {
        SynthSpec {
            surface: TrueSurface { b0: 23.73, bn: -0.73, bd: -0.81, bn2: 0.004, bnd: 0.0008, bd2: 0.0048 },
            return_delta: -1.5,
            return_prefactor: 10.0,
            budgets: (0..7).map(|i| 10f64.powf(14.0 + 0.5 * i as f64)).collect(),
            model_grid: (0..9).map(|i| 10f64.powf(3.5 + 0.625 * i as f64).round() as u64).collect(),
            noise_sigma: 0.01,
            return_noise_sigma: None,
            return_ceiling: None,
            seed: 42,
            flop_denominator: 6.0,
            domain: default_domain(),
            setting: Setting::BcLoss,
        }
    }
}

fn strictly_ascending_positive(values: &[f64]) -> bool {
    values.iter().all(|&v| v > 0.0 && v.is_finite()) && values.windows(2).all(|w| w[0] < w[1])
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.budgets.is_empty() || !strictly_ascending_positive(&self.budgets) {
            return invalid("budgets must be non-empty, positive and strictly ascending");
        }
        let grid: Vec<f64> = self.model_grid.iter().map(|&n| n as f64).collect();
        if grid.is_empty() || !strictly_ascending_positive(&grid) {
            return invalid("model_grid must be non-empty, positive and strictly ascending");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid("noise_sigma must be ≥ 0");
        }
        if let Some(s) = self.return_noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return invalid("return_noise_sigma must be ≥ 0");
            }
        }
        if !(self.flop_denominator > 0.0) {
            return invalid("flop_denominator must be > 0");
        }
        if !(self.return_prefactor > 0.0) {
            return invalid("return_prefactor must be > 0");
        }
        if !self.return_delta.is_finite() {
            return invalid("return_delta must be finite");
        }
        let denom = self.surface.to_surface().denom();
        if !(denom.abs() >= MIN_ABS_DENOM) {
            return Err(SynthError::Invalid(format!("surface denom {denom:e} is within {MIN_ABS_DENOM:e} of zero")));
        }
        Ok(())
    }

    fn true_return(&self, loss: f64) -> f64 {
        let r = self.return_prefactor * loss.powf(self.return_delta);
        self.return_ceiling.map_or(r, |c| r.min(c))
    }
}

/// Sample one record per (budget, model size) cell.
pub fn generate(spec: &SynthSpec) -> Result<Vec<ExperimentRecord>, SynthError> {
    spec.validate()?;
    let surface = spec.surface.to_surface();
    let return_sigma = spec.return_noise_sigma.unwrap_or(spec.noise_sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.budgets.len() * spec.model_grid.len());
    for &c in &spec.budgets {
        for &n in &spec.model_grid {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let eps_r: f64 = StandardNormal.sample(&mut rng);
            let d = c / (spec.flop_denominator * n as f64);
            let loss = (surface.eval_log((n as f64).ln(), d.ln()) + spec.noise_sigma * eps).exp();
            let mean_return = spec.true_return(loss) * (return_sigma * eps_r).exp();
            records.push(ExperimentRecord {
                domain: spec.domain.clone(),
                setting: spec.setting,
                flops: c,
                params: n,
                samples: d,
                loss: Some(loss),
                mean_return: Some(mean_return),
                seed: spec.seed as i64,
                meta: BTreeMap::new(),
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueOptimum {
    pub budget: f64,
    pub n_opt: f64,
    pub d_opt: f64,
    pub loss_opt: f64,
    pub return_opt: f64,
}

/// Exact counterparts of everything the pipeline estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub alpha: f64,
    pub beta: f64,
    pub g: f64,
    /// Log-log slope of the true optimal loss over the budget list.
    pub gamma: f64,
    /// Log-log slope of the true optimal return over the budget list.
    pub return_gamma: f64,
    pub delta: f64,
    pub flop_denominator: f64,
    pub optima: Vec<TrueOptimum>,
    /// Budget at which the true optimal return first reaches the ceiling.
    pub saturation_budget: Option<f64>,
}

impl SynthTruth {
    /// True optimum at an arbitrary budget.
    pub fn optimum_at(spec: &SynthSpec, c: f64) -> Result<TrueOptimum, SynthError> {
        let surface = spec.surface.to_surface();
        let (n_opt, d_opt) = optimal_allocation(&surface, c, spec.flop_denominator)?;
        let loss_opt = surface.eval_log(n_opt.ln(), d_opt.ln()).exp();
        Ok(TrueOptimum { budget: c, n_opt, d_opt, loss_opt, return_opt: spec.true_return(loss_opt) })
    }
}

pub fn analytic_optima(spec: &SynthSpec) -> Result<SynthTruth, SynthError> {
    spec.validate()?;
    let e = alpha_beta(&spec.surface.to_surface())?;
    let optima = spec
        .budgets
        .iter()
        .map(|&c| SynthTruth::optimum_at(spec, c))
        .collect::<Result<Vec<_>, _>>()?;
    let slope = |pts: Vec<(f64, f64)>| -> f64 {
        match pts.len() {
            0 | 1 => f64::NAN,
            2 => (pts[1].1 / pts[0].1).ln() / (pts[1].0 / pts[0].0).ln(),
            _ => fit_power_law(&pts).map_or(f64::NAN, |l: PowerLaw| l.exponent),
        }
    };
    let gamma = slope(optima.iter().map(|o| (o.budget, o.loss_opt)).collect());
    let return_gamma = slope(optima.iter().map(|o| (o.budget, o.return_opt)).collect());
    let saturation_budget = spec.return_ceiling.and_then(|ceiling| saturation_budget(spec, ceiling));
    Ok(SynthTruth {
        alpha: e.alpha,
        beta: e.beta,
        g: e.g,
        gamma,
        return_gamma,
        delta: spec.return_delta,
        flop_denominator: spec.flop_denominator,
        optima,
        saturation_budget,
    })
}

/// Smallest budget in `[1, 1e40]` whose unclipped optimal return reaches
/// `ceiling`, by bisection on `ln C`. `None` if the optimal return never
/// reaches it or is not increasing over that span.
fn saturation_budget(spec: &SynthSpec, ceiling: f64) -> Option<f64> {
    let unclipped = SynthSpec { return_ceiling: None, ..spec.clone() };
    let excess = |ln_c: f64| {
        SynthTruth::optimum_at(&unclipped, ln_c.exp()).map(|o| o.return_opt - ceiling).unwrap_or(f64::NAN)
    };
    // Scan for the first sign change, then bisect inside it.
    let (lo_end, hi_end) = (spec.flop_denominator.ln(), 40.0 * std::f64::consts::LN_10);
    let steps = 400;
    let h = (hi_end - lo_end) / steps as f64;
    let mut prev = lo_end;
    if excess(prev) >= 0.0 {
        return None;
    }
    for i in 1..=steps {
        let x = lo_end + h * i as f64;
        if excess(x) >= 0.0 {
            let (mut a, mut b) = (prev, x);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if excess(m) >= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Some(b.exp());
        }
        prev = x;
    }
    None
}

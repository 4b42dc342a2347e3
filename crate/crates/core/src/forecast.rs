//! Compute forecasts from fitted laws.
//!
//! Three routes lead from a target to `(C, N, D)`:
//! a return target through the return-loss law and the loss isoFLOP laws,
//! a return target through the return-vs-FLOPs law directly, and a budget
//! through the parametric surface's allocation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isoflop::{BudgetOptimum, IsoflopLaws, Objective};
use crate::numerics::{fit_power_law, NumericsError, PowerLaw};
use crate::parametric::{alpha_beta, optimal_allocation, ParametricError, QuadraticSurface};

/// Budgets this many decades past the fitted range draw a warning.
pub const EXTRAPOLATION_WARN_DECADES: f64 = 1.0;

/// Relative tolerance for pairing loss and return optima by budget.
const BUDGET_MATCH_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("return-loss law needs at least 3 budgets common to both optima lists, got {0}")]
    TooFewMatched(usize),
    #[error("target must be > 0 (got {0})")]
    Target(f64),
    #[error("{0} law is not invertible (zero exponent or nonpositive target)")]
    NonInvertible(&'static str),
    #[error("return law not increasing (exponent {0})")]
    ReturnLawNotIncreasing(f64),
    #[error("expected laws fitted for {expected:?}, got {got:?}")]
    WrongObjective { expected: Objective, got: Objective },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Parametric(#[from] ParametricError),
}

/// `R_opt = exp(log_prefactor) · L_opt^delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnLossLaw {
    pub delta: f64,
    pub log_prefactor: f64,
    pub delta_ci95: (f64, f64),
    pub r_squared: f64,
    pub n: usize,
    /// Matched budgets the law was fitted on.
    pub budgets: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ReturnLossLaw {
    fn as_power_law(&self) -> PowerLaw {
        PowerLaw::exact(self.log_prefactor, self.delta)
    }

    pub fn predict_return(&self, loss: f64) -> f64 {
        self.as_power_law().predict(loss)
    }

    pub fn implied_loss(&self, target_return: f64) -> Option<f64> {
        self.as_power_law().invert(target_return)
    }
}

/// Regress `ln R_opt` on `ln L_opt` over budgets present in both lists.
pub fn fit_return_loss(
    optima_loss: &[BudgetOptimum],
    optima_return: &[BudgetOptimum],
) -> Result<ReturnLossLaw, ForecastError> {
    let mut pairs = Vec::new();
    let mut budgets = Vec::new();
    for l in optima_loss {
        let matched = optima_return
            .iter()
            .find(|r| ((r.budget - l.budget) / l.budget).abs() <= BUDGET_MATCH_TOL);
        if let Some(r) = matched {
            pairs.push((l.metric_opt, r.metric_opt));
            budgets.push(l.budget);
        }
    }
    if pairs.len() < 3 {
        return Err(ForecastError::TooFewMatched(pairs.len()));
    }
    let law = fit_power_law(&pairs)?;
    let mut warnings = Vec::new();
    if law.exponent >= 0.0 {
        warnings.push(format!(
            "return does not improve as loss falls (delta = {:.4})",
            law.exponent
        ));
    }
    Ok(ReturnLossLaw {
        delta: law.exponent,
        log_prefactor: law.log_prefactor,
        delta_ci95: law.exponent_ci95,
        r_squared: law.r_squared,
        n: law.n,
        budgets,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMethod {
    /// Return target → loss → FLOPs via the loss isoFLOP laws.
    IsoflopChain,
    /// Return target → FLOPs via the return isoFLOP laws.
    IsoflopReturnLaw,
    /// Budget → `(N, D)` via the isoFLOP `N` and `D` laws.
    IsoflopBudget,
    /// Budget → `(N, D)` via the parametric surface.
    Parametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub method: ForecastMethod,
    /// Target return, or the budget itself for budget-driven methods.
    pub target: f64,
    pub implied_loss: Option<f64>,
    pub flops: f64,
    pub params: f64,
    pub samples: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Distance in decades outside the fitted budget range; 0 inside it.
    pub extrapolation_decades: f64,
    pub outside_fitted_range: bool,
    pub warnings: Vec<String>,
}

/// Distance outside the fitted range in decades, and a warning once that
/// distance exceeds [`EXTRAPOLATION_WARN_DECADES`].
fn range_warnings(flops: f64, range: Option<(f64, f64)>) -> (f64, Vec<String>) {
    let Some((lo, hi)) = range else {
        return (0.0, Vec::new());
    };
    let (decades, side, edge) = if flops > hi {
        ((flops / hi).log10(), "beyond the largest", hi)
    } else if flops < lo {
        ((lo / flops).log10(), "below the smallest", lo)
    } else {
        return (0.0, Vec::new());
    };
    let mut warnings = Vec::new();
    if decades > EXTRAPOLATION_WARN_DECADES {
        warnings.push(format!(
            "budget {flops:.3e} extrapolates {decades:.2} decades {side} fitted budget {edge:.3e}"
        ));
    }
    (decades, warnings)
}

fn check_objective(laws: &IsoflopLaws, expected: Objective) -> Result<(), ForecastError> {
    if laws.objective != expected {
        return Err(ForecastError::WrongObjective { expected, got: laws.objective });
    }
    Ok(())
}

fn check_target(target: f64) -> Result<(), ForecastError> {
    if target > 0.0 && target.is_finite() {
        Ok(())
    } else {
        Err(ForecastError::Target(target))
    }
}

/// Allocation at budget `c` read off the isoFLOP `N` and `D` laws.
pub fn forecast_isoflop_budget(c: f64, laws: &IsoflopLaws) -> Result<Forecast, ForecastError> {
    check_target(c)?;
    let (extrapolation_decades, warnings) = range_warnings(c, Some(laws.budget_range()));
    Ok(Forecast {
        method: ForecastMethod::IsoflopBudget,
        target: c,
        implied_loss: None,
        flops: c,
        params: laws.n_law.predict(c),
        samples: laws.d_law.predict(c),
        alpha: laws.alpha(),
        beta: laws.beta(),
        extrapolation_decades,
        outside_fitted_range: extrapolation_decades > 0.0,
        warnings,
    })
}

/// Invert the return-loss law for the loss that reaches `target_return`,
/// invert the loss-vs-FLOPs law for the budget, and read `(N, D)` there.
pub fn forecast_isoflop_chain(
    target_return: f64,
    rl_law: &ReturnLossLaw,
    loss_laws: &IsoflopLaws,
) -> Result<Forecast, ForecastError> {
    check_target(target_return)?;
    check_objective(loss_laws, Objective::MinLoss)?;
    let loss = rl_law
        .implied_loss(target_return)
        .ok_or(ForecastError::NonInvertible("return-loss"))?;
    let flops = loss_laws
        .metric_law
        .invert(loss)
        .ok_or(ForecastError::NonInvertible("loss-vs-FLOPs"))?;
    let mut forecast = forecast_isoflop_budget(flops, loss_laws)?;
    forecast.method = ForecastMethod::IsoflopChain;
    forecast.target = target_return;
    forecast.implied_loss = Some(loss);
    forecast.warnings.extend(rl_law.warnings.iter().cloned());
    Ok(forecast)
}

/// Invert the return-vs-FLOPs law directly and read `(N, D)` off the
/// return-optimal laws.
pub fn forecast_from_return_law(target_return: f64, return_laws: &IsoflopLaws) -> Result<Forecast, ForecastError> {
    check_target(target_return)?;
    check_objective(return_laws, Objective::MaxReturn)?;
    let gamma = return_laws.gamma();
    if !(gamma > 0.0) {
        return Err(ForecastError::ReturnLawNotIncreasing(gamma));
    }
    let flops = return_laws
        .metric_law
        .invert(target_return)
        .ok_or(ForecastError::NonInvertible("return-vs-FLOPs"))?;
    let mut forecast = forecast_isoflop_budget(flops, return_laws)?;
    forecast.method = ForecastMethod::IsoflopReturnLaw;
    forecast.target = target_return;
    Ok(forecast)
}

/// Closed-form allocation of the parametric surface at budget `c`.
pub fn forecast_parametric(
    c: f64,
    surface: &QuadraticSurface,
    flop_denominator: f64,
) -> Result<Forecast, ForecastError> {
    check_target(c)?;
    let e = alpha_beta(surface)?;
    let (params, samples) = optimal_allocation(surface, c, flop_denominator)?;
    let budget_range = surface
        .ln_nd_range
        .map(|(lo, hi)| (flop_denominator * lo.exp(), flop_denominator * hi.exp()));
    let (extrapolation_decades, mut warnings) = range_warnings(c, budget_range);
    warnings.splice(0..0, surface.warnings.iter().cloned());
    if let Some((lo, hi)) = surface.ln_n_range {
        let n_hi = hi.exp();
        if params > n_hi * 10f64.powf(EXTRAPOLATION_WARN_DECADES) {
            warnings.push(format!(
                "model size {params:.3e} extrapolates {:.2} decades beyond the largest fitted size {n_hi:.3e}",
                (params / n_hi).log10()
            ));
        } else if params < lo.exp() {
            warnings.push(format!("model size {params:.3e} is below the smallest fitted size {:.3e}", lo.exp()));
        }
    }
    Ok(Forecast {
        method: ForecastMethod::Parametric,
        target: c,
        implied_loss: None,
        flops: c,
        params,
        samples,
        alpha: e.alpha,
        beta: e.beta,
        extrapolation_decades,
        outside_fitted_range: extrapolation_decades > 0.0,
        warnings,
    })
}

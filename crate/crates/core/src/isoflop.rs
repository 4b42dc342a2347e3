//! IsoFLOP profile analysis: per-budget parabola optima and the three
//! power laws `N_opt ∝ C^α`, `D_opt ∝ C^β`, `metric_opt ∝ C^γ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flops::{FlopError, FlopRule};
use crate::numerics::{fit_parabola, fit_power_law, NumericsError, Orientation, ParabolaFit, PowerLaw};
use crate::records::{fmt_f64, BudgetGroup, Metric};

/// Largest budget [`metric_floor_check`] will report a crossing at.
pub const MAX_CROSSING_BUDGET: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MinLoss,
    MaxReturn,
}

impl Objective {
    pub fn metric(self) -> Metric {
        match self {
            Objective::MinLoss => Metric::Loss,
            Objective::MaxReturn => Metric::Return,
        }
    }

    fn expected_orientation(self) -> Orientation {
        match self {
            Objective::MinLoss => Orientation::Minimum,
            Objective::MaxReturn => Orientation::Maximum,
        }
    }

    /// True when `a` is a better metric value than `b`.
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Objective::MinLoss => a < b,
            Objective::MaxReturn => a > b,
        }
    }
}

impl From<Metric> for Objective {
    fn from(metric: Metric) -> Self {
        match metric {
            Metric::Loss => Objective::MinLoss,
            Metric::Return => Objective::MaxReturn,
        }
    }
}

/// Best observed point of a budget, reported when no interior optimum exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fallback {
    pub params: u64,
    pub samples: f64,
    pub metric: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsoflopError {
    #[error("no interior optimum at budget C = {budget:e}: {reason}")]
    NoInteriorOptimum {
        budget: f64,
        reason: String,
        fallback: Option<Fallback>,
    },
    #[error("insufficient budgets: {valid} valid optima, need at least 3")]
    InsufficientBudgets { valid: usize, skipped: Vec<SkippedBudget> },
    #[error(transparent)]
    Flop(#[from] FlopError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Compute-optimal point of one isoFLOP contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetOptimum {
    pub budget: f64,
    /// `10^vertex_u` of the parabola in `log10 N`.
    pub n_opt: f64,
    /// Recomputed from `budget` and `n_opt` through the FLOP rule.
    pub d_opt: f64,
    pub metric_opt: f64,
    pub parabola: ParabolaFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedBudget {
    pub budget: f64,
    pub reason: String,
    pub fallback: Option<Fallback>,
}

/// Fit a parabola of the metric against `log10 N` for one budget.
///
/// Fails with [`IsoflopError::NoInteriorOptimum`] (carrying the empirical
/// best point) when the group has fewer than three model sizes, the parabola
/// is degenerate or opens the wrong way, or the vertex lies more than a
/// decade outside the observed model sizes.
pub fn extract_optimum(
    group: &BudgetGroup,
    objective: Objective,
    rule: &FlopRule,
) -> Result<BudgetOptimum, IsoflopError> {
    let metric = objective.metric();
    let budget = group.budget;
    let observed: Vec<(u64, f64, f64)> = group
        .records
        .iter()
        .filter_map(|r| r.metric(metric).map(|m| (r.params, r.samples, m)))
        .collect();

    let fallback = observed
        .iter()
        .fold(None::<(u64, f64, f64)>, |best, &p| match best {
            Some(b) if !objective.better(p.2, b.2) => Some(b),
            _ => Some(p),
        })
        .map(|(params, samples, metric)| Fallback { params, samples, metric });
    let no_optimum = |reason: String| IsoflopError::NoInteriorOptimum { budget, reason, fallback };

    let mut points: Vec<(f64, f64)> = observed
        .iter()
        .map(|&(n, _, m)| ((n as f64).log10(), m))
        .collect();
    // Sorting makes the fit independent of record order, bit for bit.
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let parabola = match fit_parabola(&points) {
        Ok(p) => p,
        Err(e) => return Err(no_optimum(e.to_string())),
    };
    if parabola.orientation != objective.expected_orientation() {
        return Err(no_optimum(format!(
            "parabola opens the wrong way for {} (a = {:e})",
            metric, parabola.a
        )));
    }

    let n_opt = 10f64.powf(parabola.vertex_u);
    let n_min = observed.iter().map(|p| p.0).min().unwrap_or(1) as f64;
    let n_max = observed.iter().map(|p| p.0).max().unwrap_or(1) as f64;
    if !(n_opt >= n_min / 10.0 && n_opt <= n_max * 10.0) {
        return Err(no_optimum(format!(
            "vertex N = {n_opt:e} is more than a decade outside observed sizes [{n_min:e}, {n_max:e}]"
        )));
    }
    let d_opt = rule.samples_for_budget(budget, n_opt)?;
    Ok(BudgetOptimum {
        budget,
        n_opt,
        d_opt,
        metric_opt: parabola.vertex_y,
        parabola,
    })
}

/// The three isoFLOP power laws and the optima they were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoflopLaws {
    pub objective: Objective,
    /// `N_opt` vs `C`, exponent α.
    pub n_law: PowerLaw,
    /// `D_opt` vs `C`, exponent β.
    pub d_law: PowerLaw,
    /// `L_opt` or `R_opt` vs `C`, exponent γ.
    pub metric_law: PowerLaw,
    pub optima: Vec<BudgetOptimum>,
    pub skipped: Vec<SkippedBudget>,
    pub warnings: Vec<String>,
}

impl IsoflopLaws {
    pub fn alpha(&self) -> f64 {
        self.n_law.exponent
    }

    pub fn beta(&self) -> f64 {
        self.d_law.exponent
    }

    pub fn gamma(&self) -> f64 {
        self.metric_law.exponent
    }

    /// Range of budgets the laws were fitted on.
    pub fn budget_range(&self) -> (f64, f64) {
        let lo = self.optima.iter().map(|o| o.budget).fold(f64::INFINITY, f64::min);
        let hi = self.optima.iter().map(|o| o.budget).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Approach 1: extract one optimum per budget, then regress `ln N_opt`,
/// `ln D_opt` and `ln metric_opt` on `ln C`.
///
/// Budgets whose extraction fails are skipped and listed; fewer than three
/// surviving optima is an error.
pub fn approach1_laws(
    groups: &[BudgetGroup],
    objective: Objective,
    rule: &FlopRule,
) -> Result<IsoflopLaws, IsoflopError> {
    let mut optima = Vec::new();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    for group in groups {
        match extract_optimum(group, objective, rule) {
            Ok(opt) if opt.metric_opt > 0.0 => optima.push(opt),
            Ok(opt) => {
                let reason = format!("optimal metric {} is not positive", opt.metric_opt);
                warnings.push(format!("skipped budget {:e}: {reason}", group.budget));
                skipped.push(SkippedBudget { budget: group.budget, reason, fallback: None });
            }
            Err(IsoflopError::NoInteriorOptimum { budget, reason, fallback }) => {
                warnings.push(format!("skipped budget {budget:e}: {reason}"));
                skipped.push(SkippedBudget { budget, reason, fallback });
            }
            Err(e) => return Err(e),
        }
    }
    if optima.len() < 3 {
        return Err(IsoflopError::InsufficientBudgets { valid: optima.len(), skipped });
    }
    let n_law = fit_power_law(&optima.iter().map(|o| (o.budget, o.n_opt)).collect::<Vec<_>>())?;
    let d_law = fit_power_law(&optima.iter().map(|o| (o.budget, o.d_opt)).collect::<Vec<_>>())?;
    let metric_law =
        fit_power_law(&optima.iter().map(|o| (o.budget, o.metric_opt)).collect::<Vec<_>>())?;
    Ok(IsoflopLaws { objective, n_law, d_law, metric_law, optima, skipped, warnings })
}

/// Budgets at and beyond which the metric law passes `floor`: below it for
/// loss, above it (an expert ceiling) for return.
///
/// The first element is the analytic crossing budget; any fitted budgets
/// already past it follow in ascending order. Empty when the law moves away
/// from the floor or crosses only beyond [`MAX_CROSSING_BUDGET`].
pub fn metric_floor_check(laws: &IsoflopLaws, floor: f64) -> Vec<f64> {
    let law = &laws.metric_law;
    let approaching = match laws.objective {
        Objective::MinLoss => law.exponent < 0.0,
        Objective::MaxReturn => law.exponent > 0.0,
    };
    if !approaching {
        return Vec::new();
    }
    let Some(crossing) = law.invert(floor) else {
        return Vec::new();
    };
    if !(crossing <= MAX_CROSSING_BUDGET) {
        return Vec::new();
    }
    let mut out = vec![crossing];
    let mut past: Vec<f64> = laws
        .optima
        .iter()
        .map(|o| o.budget)
        .filter(|&b| b >= crossing)
        .collect();
    past.sort_by(f64::total_cmp);
    out.extend(past);
    out
}

/// Optima table with columns `budget,n_opt,d_opt,metric_opt`.
pub fn optima_csv(optima: &[BudgetOptimum]) -> String {
    let mut out = String::from("budget,n_opt,d_opt,metric_opt\n");
    for o in optima {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(o.budget),
            fmt_f64(o.n_opt),
            fmt_f64(o.d_opt),
            fmt_f64(o.metric_opt)
        ));
    }
    out
}

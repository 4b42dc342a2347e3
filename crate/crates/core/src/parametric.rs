//! Parametric fit of a quadratic surface in `(ln N, ln D)` to every run, the
//! closed-form compute-optimal allocation it implies, and delta-method
//! intervals on the allocation exponents.
//!
//! ```text
//! ln y = b0 + bn·u + bd·v + bn2·u² + bnd·u·v + bd2·v²,   u = ln N, v = ln D
//! denom = 2·bd2 − 2·bnd + 2·bn2
//! α = (2·bd2 − bnd) / denom,  β = (2·bn2 − bnd) / denom,  G = exp((bd − bn) / denom)
//! N_opt = G·(C/k)^α,  D_opt = G⁻¹·(C/k)^β
//! ```

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{ols, NumericsError, Z95};
use crate::records::{ExperimentRecord, Metric};

/// Minimum number of usable records for the six-coefficient fit.
pub const MIN_SURFACE_RECORDS: usize = 7;

/// Coefficient labels in storage order.
pub const COEFF_NAMES: [&str; 6] = ["b0", "bn", "bd", "bn2", "bnd", "bd2"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParametricError {
    #[error("need at least {MIN_SURFACE_RECORDS} records with a positive {metric}, got {usable}")]
    TooFewRecords { metric: Metric, usable: usize },
    #[error("surface admits no interior optimum along constraint (denom = {denom:e})")]
    NoInteriorOptimum { denom: f64 },
    #[error("singular covariance: {0}")]
    SingularCovariance(String),
    #[error("budget must be > 0 and finite (got {0})")]
    Budget(f64),
    #[error("flop denominator must be > 0 (got {0})")]
    Denominator(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Loss surfaces.
    Minimize,
    /// Return surfaces.
    Maximize,
}

impl From<Metric> for Direction {
    fn from(metric: Metric) -> Self {
        match metric {
            Metric::Loss => Direction::Minimize,
            Metric::Return => Direction::Maximize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    Alpha,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSurface {
    pub b0: f64,
    pub bn: f64,
    pub bd: f64,
    pub bn2: f64,
    pub bnd: f64,
    pub bd2: f64,
    /// 6×6 OLS coefficient covariance in [`COEFF_NAMES`] order.
    pub covariance: Vec<Vec<f64>>,
    pub direction: Direction,
    pub n: usize,
    pub r_squared: f64,
    /// Range of `ln N` in the fitted data.
    pub ln_n_range: Option<(f64, f64)>,
    /// Range of `ln(N·D)` in the fitted data; the budget range is this
    /// times the FLOP denominator.
    #[serde(default)]
    pub ln_nd_range: Option<(f64, f64)>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl QuadraticSurface {
    /// A surface from known coefficients, with zero covariance.
    pub fn from_coeffs(coeffs: [f64; 6], direction: Direction) -> Self {
        let [b0, bn, bd, bn2, bnd, bd2] = coeffs;
        QuadraticSurface {
            b0,
            bn,
            bd,
            bn2,
            bnd,
            bd2,
            covariance: vec![vec![0.0; 6]; 6],
            direction,
            n: 0,
            r_squared: 1.0,
            ln_n_range: None,
            ln_nd_range: None,
            warnings: Vec::new(),
        }
    }

    pub fn coeffs(&self) -> [f64; 6] {
        [self.b0, self.bn, self.bd, self.bn2, self.bnd, self.bd2]
    }

    pub fn denom(&self) -> f64 {
        2.0 * self.bd2 - 2.0 * self.bnd + 2.0 * self.bn2
    }

    /// `ln y` at `(u, v) = (ln N, ln D)`.
    pub fn eval_log(&self, u: f64, v: f64) -> f64 {
        self.b0
            + self.bn * u
            + self.bd * v
            + self.bn2 * u * u
            + self.bnd * u * v
            + self.bd2 * v * v
    }

    /// The same optimum read as the opposite problem: every coefficient but
    /// the intercept negated, direction swapped.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        out.bn = -self.bn;
        out.bd = -self.bd;
        out.bn2 = -self.bn2;
        out.bnd = -self.bnd;
        out.bd2 = -self.bd2;
        out.direction = match self.direction {
            Direction::Minimize => Direction::Maximize,
            Direction::Maximize => Direction::Minimize,
        };
        out
    }
}

/// Design row `[1, u, v, u², u·v, v²]`.
pub fn design_row(u: f64, v: f64) -> [f64; 6] {
    [1.0, u, v, u * u, u * v, v * v]
}

/// OLS of `ln metric` on the quadratic design over every record.
///
/// Records without the metric, or with a value ≤ 0, are left out and noted
/// in `warnings`. Too few distinct model or data sizes surfaces as a rank
/// error from the regression.
pub fn fit_surface(records: &[ExperimentRecord], metric: Metric) -> Result<QuadraticSurface, ParametricError> {
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut excluded = 0usize;
    for r in records {
        match r.metric(metric) {
            Some(y) if y > 0.0 => {
                let (u, v) = ((r.params as f64).ln(), r.samples.ln());
                rows.push(design_row(u, v));
                targets.push(y.ln());
            }
            Some(_) => excluded += 1,
            None => {}
        }
    }
    if excluded > 0 {
        let msg = format!("excluded {excluded} record(s) with nonpositive {metric}");
        warn!("{msg}");
        warnings.push(msg);
    }
    if rows.len() < MIN_SURFACE_RECORDS {
        return Err(ParametricError::TooFewRecords { metric, usable: rows.len() });
    }
    let design = DMatrix::from_fn(rows.len(), 6, |i, j| rows[i][j]);
    let fit = ols(&design, &DVector::from_vec(targets))?;
    let c = &fit.coeffs;
    let range = |f: fn(&[f64; 6]) -> f64| {
        rows.iter().map(f).fold(None, |acc: Option<(f64, f64)>, x| {
            Some(acc.map_or((x, x), |(lo, hi)| (lo.min(x), hi.max(x))))
        })
    };
    let ln_n_range = range(|row| row[1]);
    let ln_nd_range = range(|row| row[1] + row[2]);
    Ok(QuadraticSurface {
        b0: c[0],
        bn: c[1],
        bd: c[2],
        bn2: c[3],
        bnd: c[4],
        bd2: c[5],
        covariance: fit.covariance_rows(),
        direction: metric.into(),
        n: fit.n,
        r_squared: fit.r_squared,
        ln_n_range,
        ln_nd_range,
        warnings,
    })
}

/// Allocation exponents and prefactor implied by a surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha: f64,
    pub beta: f64,
    pub g: f64,
    pub denom: f64,
}

pub fn alpha_beta(surface: &QuadraticSurface) -> Result<Exponents, ParametricError> {
    let denom = surface.denom();
    let ok = match surface.direction {
        Direction::Minimize => denom > 0.0,
        Direction::Maximize => denom < 0.0,
    };
    if !ok || !denom.is_finite() {
        return Err(ParametricError::NoInteriorOptimum { denom });
    }
    let alpha = (2.0 * surface.bd2 - surface.bnd) / denom;
    // Equal to (2·bn2 − bnd)/denom algebraically; this form keeps α + β = 1
    // exact in floating point.
    let beta = 1.0 - alpha;
    let g = ((surface.bd - surface.bn) / denom).exp();
    Ok(Exponents { alpha, beta, g, denom })
}

/// `(N_opt, D_opt)` for budget `c` under `C = k·N·D`.
pub fn optimal_allocation(
    surface: &QuadraticSurface,
    c: f64,
    flop_denominator: f64,
) -> Result<(f64, f64), ParametricError> {
    let e = alpha_beta(surface)?;
    check_budget(c, flop_denominator)?;
    let s = (c / flop_denominator).ln();
    let ln_g = (surface.bd - surface.bn) / e.denom;
    let n = (ln_g + e.alpha * s).exp();
    let d = (-ln_g + e.beta * s).exp();
    Ok((n, d))
}

fn check_budget(c: f64, flop_denominator: f64) -> Result<(), ParametricError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(ParametricError::Budget(c));
    }
    if !(flop_denominator > 0.0 && flop_denominator.is_finite()) {
        return Err(ParametricError::Denominator(flop_denominator));
    }
    Ok(())
}

/// Brute-force optimum of the surface along `ln N + ln D = ln(C/k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub n: f64,
    pub d: f64,
    /// Set when the best grid point sits on the edge of the search window.
    pub at_boundary: bool,
}

/// Grid search over `u = ln N` then golden-section refinement to 1e−6.
///
/// The window spans ±10 around the closed-form `ln N_opt`, or around the
/// middle of the fitted `ln N` range (falling back to `ln(C/k)/2`) when the
/// closed form does not apply. `grid` is raised to at least 1000.
pub fn constrained_search(
    surface: &QuadraticSurface,
    c: f64,
    flop_denominator: f64,
    grid: usize,
) -> Result<SearchResult, ParametricError> {
    check_budget(c, flop_denominator)?;
    let s = (c / flop_denominator).ln();
    let center = match optimal_allocation(surface, c, flop_denominator) {
        Ok((n, _)) if n.is_finite() && n > 0.0 => n.ln(),
        _ => surface.ln_n_range.map_or(s / 2.0, |(lo, hi)| 0.5 * (lo + hi)),
    };
    let sign = match surface.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let objective = |u: f64| sign * surface.eval_log(u, s - u);

    let grid = grid.max(1000);
    let (lo, hi) = (center - 10.0, center + 10.0);
    let step = (hi - lo) / (grid - 1) as f64;
    let at = |i: usize| lo + step * i as f64;
    let best = (0..grid)
        .min_by(|&i, &j| objective(at(i)).total_cmp(&objective(at(j))))
        .unwrap_or(0);

    let u = if best == 0 || best == grid - 1 {
        at(best)
    } else {
        golden_section(objective, at(best - 1), at(best + 1), 1e-6)
    };
    Ok(SearchResult {
        n: u.exp(),
        d: (s - u).exp(),
        at_boundary: best == 0 || best == grid - 1,
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Analytic gradient of α or β with respect to the six coefficients.
///
/// With `p = 2·bd2 − bnd`, α = p/denom and β = 1 − α, so ∇β = −∇α. The
/// intercept, `bn` and `bd` entries are zero.
pub fn exponent_gradient(surface: &QuadraticSurface, which: Exponent) -> [f64; 6] {
    let denom = surface.denom();
    let p = 2.0 * surface.bd2 - surface.bnd;
    let d2 = denom * denom;
    let grad_alpha = [
        0.0,
        0.0,
        0.0,
        -2.0 * p / d2,
        (2.0 * p - denom) / d2,
        2.0 * (denom - p) / d2,
    ];
    match which {
        Exponent::Alpha => grad_alpha,
        Exponent::Beta => grad_alpha.map(|g| -g),
    }
}

/// Delta-method 95% interval `h ± 1.96·sqrt(∇hᵀ Σ ∇h)` with Σ the OLS
/// coefficient covariance.
pub fn delta_ci(surface: &QuadraticSurface, which: Exponent) -> Result<(f64, f64), ParametricError> {
    let e = alpha_beta(surface)?;
    let cov = &surface.covariance;
    if cov.len() != 6 || cov.iter().any(|row| row.len() != 6) {
        return Err(ParametricError::SingularCovariance("covariance is not 6×6".into()));
    }
    if cov.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ParametricError::SingularCovariance("non-finite covariance entry".into()));
    }
    let g = exponent_gradient(surface, which);
    let mut var = 0.0;
    let mut scale = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            var += g[i] * cov[i][j] * g[j];
            scale += (g[i] * cov[i][j] * g[j]).abs();
        }
    }
    // Roundoff can leave a tiny negative variance; anything larger means the
    // matrix is not a covariance.
    if var < -1e-12 * scale {
        return Err(ParametricError::SingularCovariance(format!(
            "quadratic form is negative ({var:e})"
        )));
    }
    let se = var.max(0.0).sqrt();
    let h = match which {
        Exponent::Alpha => e.alpha,
        Exponent::Beta => e.beta,
    };
    Ok((h - Z95 * se, h + Z95 * se))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationLaw {
    pub alpha: f64,
    pub beta: f64,
    pub g: f64,
    pub alpha_ci95: (f64, f64),
    pub beta_ci95: (f64, f64),
    pub flop_denominator: f64,
}

impl AllocationLaw {
    pub fn allocate(&self, c: f64) -> (f64, f64) {
        let x = c / self.flop_denominator;
        (self.g * x.powf(self.alpha), x.powf(self.beta) / self.g)
    }
}

/// Exponents, prefactor and both delta-method intervals.
pub fn allocation_law(surface: &QuadraticSurface, flop_denominator: f64) -> Result<AllocationLaw, ParametricError> {
    let e = alpha_beta(surface)?;
    if !(flop_denominator > 0.0) {
        return Err(ParametricError::Denominator(flop_denominator));
    }
    Ok(AllocationLaw {
        alpha: e.alpha,
        beta: e.beta,
        g: e.g,
        alpha_ci95: delta_ci(surface, Exponent::Alpha)?,
        beta_ci95: delta_ci(surface, Exponent::Beta)?,
        flop_denominator,
    })
}

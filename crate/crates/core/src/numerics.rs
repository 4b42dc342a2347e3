//! Regression primitives: least squares with coefficient covariance, parabola
//! fits with vertex extraction, and log-log power laws.
//!
//! All logarithms are natural unless a name says otherwise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two-sided 95% normal quantile used for every interval in the crate.
pub const Z95: f64 = 1.96;

/// Diagonal threshold of `R` (on unit-norm columns) below which a column is
/// treated as linearly dependent on the columns before it.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("need more observations than coefficients (n = {n}, p = {p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("design matrix is rank deficient: column {column} is linearly dependent on earlier columns")]
    RankDeficient { column: usize },
    #[error("design and targets disagree in length ({rows} rows, {targets} targets)")]
    ShapeMismatch { rows: usize, targets: usize },
    #[error("non-finite value in regression input")]
    NonFinite,
    #[error("parabola underdetermined: need at least 3 distinct u values (got {0})")]
    ParabolaUnderdetermined(usize),
    #[error("degenerate parabola: quadratic coefficient {a:e} is negligible")]
    DegenerateParabola { a: f64 },
    #[error("power law needs strictly positive coordinates; offending indices {0:?}")]
    NonPositive(Vec<usize>),
}

/// Ordinary least squares result.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coeffs: Vec<f64>,
    /// `residual_variance · (XᵀX)⁻¹`.
    pub covariance: DMatrix<f64>,
    /// `RSS / (n − p)`.
    pub residual_variance: f64,
    pub r_squared: f64,
    pub n: usize,
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn std_error(&self, j: usize) -> f64 {
        self.covariance[(j, j)].max(0.0).sqrt()
    }

    pub fn covariance_rows(&self) -> Vec<Vec<f64>> {
        (0..self.covariance.nrows())
            .map(|i| self.covariance.row(i).iter().copied().collect())
            .collect()
    }
}

/// Least squares via Householder QR on unit-norm columns.
///
/// Column equilibration does not change the solution but keeps the rank test
/// and the triangular solves well scaled when columns differ by orders of
/// magnitude (e.g. `ln N` next to `(ln N)²`).
pub fn ols(design: &DMatrix<f64>, targets: &DVector<f64>) -> Result<OlsFit, NumericsError> {
    least_squares(design, targets, false)
}

/// With `allow_exact`, a square system is accepted and reports zero
/// residual variance.
fn least_squares(
    design: &DMatrix<f64>,
    targets: &DVector<f64>,
    allow_exact: bool,
) -> Result<OlsFit, NumericsError> {
    let (n, p) = design.shape();
    if targets.len() != n {
        return Err(NumericsError::ShapeMismatch { rows: n, targets: targets.len() });
    }
    if n < p || (n == p && !allow_exact) {
        return Err(NumericsError::TooFewObservations { n, p });
    }
    if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }

    let norms: Vec<f64> = (0..p).map(|j| design.column(j).norm()).collect();
    if let Some(column) = norms.iter().position(|&s| s == 0.0) {
        return Err(NumericsError::RankDeficient { column });
    }
    let mut scaled = design.clone();
    for (j, &s) in norms.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(s);
    }

    let qr = scaled.qr();
    let r = qr.r();
    if let Some(column) = (0..p).find(|&j| r[(j, j)].abs() < RANK_TOL) {
        return Err(NumericsError::RankDeficient { column });
    }
    let qty = qr.q().transpose() * targets;
    let scaled_coeffs = r
        .solve_upper_triangular(&qty)
        .ok_or(NumericsError::RankDeficient { column: p - 1 })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(NumericsError::RankDeficient { column: p - 1 })?;

    let coeffs: Vec<f64> = scaled_coeffs
        .iter()
        .zip(&norms)
        .map(|(c, s)| c / s)
        .collect();
    let fitted = design * DVector::from_column_slice(&coeffs);
    let residuals: Vec<f64> = (targets - fitted).iter().copied().collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let residual_variance = if n > p { rss / (n - p) as f64 } else { 0.0 };

    let unscaled_inv = &r_inv * r_inv.transpose();
    let mut covariance = DMatrix::from_fn(p, p, |i, j| {
        residual_variance * unscaled_inv[(i, j)] / (norms[i] * norms[j])
    });
    covariance = (&covariance + covariance.transpose()) * 0.5;

    let has_intercept = (0..p).any(|j| {
        let col = design.column(j);
        col[0] != 0.0 && col.iter().all(|&v| v == col[0])
    });
    let r_squared = if has_intercept {
        let mean = targets.mean();
        let tss: f64 = targets.iter().map(|y| (y - mean).powi(2)).sum();
        centered_r_squared(rss, tss)
    } else {
        let tss: f64 = targets.iter().map(|y| y * y).sum();
        centered_r_squared(rss, tss)
    };

    Ok(OlsFit { coeffs, covariance, residual_variance, r_squared, n, residuals })
}

fn centered_r_squared(rss: f64, tss: f64) -> f64 {
    if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else if rss <= f64::EPSILON {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `a > 0`: the vertex is a minimum.
    Minimum,
    /// `a < 0`: the vertex is a maximum.
    Maximum,
}

/// `y = a·u² + b·u + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub vertex_u: f64,
    pub vertex_y: f64,
    pub orientation: Orientation,
    pub r_squared: f64,
}

impl ParabolaFit {
    fn from_coeffs(a: f64, b: f64, c: f64, r_squared: f64) -> Self {
        ParabolaFit {
            a,
            b,
            c,
            vertex_u: -b / (2.0 * a),
            vertex_y: c - b * b / (4.0 * a),
            orientation: if a > 0.0 { Orientation::Minimum } else { Orientation::Maximum },
            r_squared,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.a * u + self.b) * u + self.c
    }
}

pub fn fit_parabola(points: &[(f64, f64)]) -> Result<ParabolaFit, NumericsError> {
    let mut us: Vec<f64> = points.iter().map(|p| p.0).collect();
    us.sort_by(f64::total_cmp);
    us.dedup();
    if us.len() < 3 {
        return Err(NumericsError::ParabolaUnderdetermined(us.len()));
    }
    let design = DMatrix::from_fn(points.len(), 3, |i, j| points[i].0.powi(j as i32));
    let targets = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let fit = least_squares(&design, &targets, true)?;
    let (c, b, a) = (fit.coeffs[0], fit.coeffs[1], fit.coeffs[2]);

    let u_span = us[us.len() - 1] - us[0];
    let (y_min, y_max) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let y_scale = (y_max - y_min).max(y_min.abs().max(y_max.abs()));
    if a == 0.0 || a.abs() <= 1e-12 * y_scale / (u_span * u_span) {
        return Err(NumericsError::DegenerateParabola { a });
    }
    Ok(ParabolaFit::from_coeffs(a, b, c, fit.r_squared))
}

/// `y = exp(log_prefactor) · x^exponent`, fitted by OLS of `ln y` on `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub exponent: f64,
    /// Natural log of the prefactor.
    pub log_prefactor: f64,
    pub exponent_se: f64,
    pub log_prefactor_se: f64,
    pub exponent_ci95: (f64, f64),
    pub r_squared: f64,
    pub n: usize,
    /// Smallest and largest fitted `x`; `None` for laws built from known
    /// coefficients.
    pub x_range: Option<(f64, f64)>,
}

impl PowerLaw {
    pub fn predict(&self, x: f64) -> f64 {
        (self.log_prefactor + self.exponent * x.ln()).exp()
    }

    /// The `x` at which the law predicts `y`; `None` for a flat law or `y ≤ 0`.
    pub fn invert(&self, y: f64) -> Option<f64> {
        if self.exponent == 0.0 || !(y > 0.0) {
            return None;
        }
        Some(((y.ln() - self.log_prefactor) / self.exponent).exp())
    }

    /// Build a law from known coefficients (no uncertainty).
    pub fn exact(log_prefactor: f64, exponent: f64) -> Self {
        PowerLaw {
            exponent,
            log_prefactor,
            exponent_se: 0.0,
            log_prefactor_se: 0.0,
            exponent_ci95: (exponent, exponent),
            r_squared: 1.0,
            n: 0,
            x_range: None,
        }
    }
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLaw, NumericsError> {
    let bad: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, (x, y))| !(*x > 0.0 && *y > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(NumericsError::NonPositive(bad));
    }
    let design = DMatrix::from_fn(points.len(), 2, |i, j| if j == 0 { 1.0 } else { points[i].0.ln() });
    let targets = DVector::from_iterator(points.len(), points.iter().map(|p| p.1.ln()));
    let fit = ols(&design, &targets)?;
    let exponent = fit.coeffs[1];
    let exponent_se = fit.std_error(1);
    let x_range = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    Ok(PowerLaw {
        exponent,
        log_prefactor: fit.coeffs[0],
        exponent_se,
        log_prefactor_se: fit.std_error(0),
        exponent_ci95: (exponent - Z95 * exponent_se, exponent + Z95 * exponent_se),
        r_squared: fit.r_squared,
        n: fit.n,
        x_range: Some(x_range),
    })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let rx = ranks(x);
    let ry = ranks(y);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

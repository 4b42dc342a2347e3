//! Rolling-origin cross-validation of power-law regressions.
//!
//! Points are ordered by budget. Each step fits on a prefix and scores the
//! single next point, so evaluation always lies in the future of training.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{fit_power_law, NumericsError, PowerLaw};

pub const DEFAULT_MIN_TRAIN: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CvError {
    #[error("need at least {needed} points for min_train = {min_train}, got {got}")]
    TooFewPoints { needed: usize, min_train: usize, got: usize },
    #[error("min_train must be ≥ 1")]
    MinTrain,
    #[error("points must be strictly ascending in x (index {0})")]
    NotSorted(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvStep {
    pub train_size: usize,
    /// Index of the scored point; always equal to `train_size`.
    pub eval_index: usize,
    pub eval_budget: f64,
    pub actual: f64,
    pub predicted: Option<f64>,
    /// `|predicted − actual|` in linear space.
    pub rmse: Option<f64>,
    pub b0: Option<f64>,
    pub b1: Option<f64>,
    /// Set when the fit failed; such steps are left out of the mean.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub regression_name: String,
    pub steps: Vec<CvStep>,
    /// Mean over successful steps; `None` if every step failed.
    pub mean_rmse: Option<f64>,
}

/// Rolling CV with [`fit_power_law`].
pub fn rolling_cv(name: &str, points: &[(f64, f64)], min_train: usize) -> Result<CvReport, CvError> {
    rolling_cv_with(name, points, min_train, fit_power_law)
}

/// Rolling CV with a caller-supplied fitter.
pub fn rolling_cv_with<F>(name: &str, points: &[(f64, f64)], min_train: usize, fit: F) -> Result<CvReport, CvError>
where
    F: Fn(&[(f64, f64)]) -> Result<PowerLaw, NumericsError>,
{
    if min_train == 0 {
        return Err(CvError::MinTrain);
    }
    if points.len() < min_train + 1 {
        return Err(CvError::TooFewPoints { needed: min_train + 1, min_train, got: points.len() });
    }
    if let Some(i) = (1..points.len()).find(|&i| !(points[i].0 > points[i - 1].0)) {
        return Err(CvError::NotSorted(i));
    }

    let steps: Vec<CvStep> = (min_train..points.len())
        .map(|k| {
            let (x, actual) = points[k];
            let mut step = CvStep {
                train_size: k,
                eval_index: k,
                eval_budget: x,
                actual,
                predicted: None,
                rmse: None,
                b0: None,
                b1: None,
                failure: None,
            };
            match fit(&points[..k]) {
                Ok(law) => {
                    let predicted = law.predict(x);
                    step.predicted = Some(predicted);
                    step.rmse = Some((predicted - actual).abs());
                    step.b0 = Some(law.log_prefactor);
                    step.b1 = Some(law.exponent);
                }
                Err(e) => step.failure = Some(e.to_string()),
            }
            step
        })
        .collect();

    let scored: Vec<f64> = steps.iter().filter_map(|s| s.rmse).collect();
    let mean_rmse = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    Ok(CvReport { regression_name: name.to_string(), steps, mean_rmse })
}

/// A regression whose CV could not run at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFailure {
    pub regression_name: String,
    pub error: String,
}

/// Run [`rolling_cv`] over named point lists; one list failing does not
/// affect the others.
pub fn cv_all(inputs: &[(String, Vec<(f64, f64)>)], min_train: usize) -> Vec<Result<CvReport, CvFailure>> {
    inputs
        .iter()
        .map(|(name, points)| {
            rolling_cv(name, points, min_train).map_err(|e| CvFailure {
                regression_name: name.clone(),
                error: e.to_string(),
            })
        })
        .collect()
}

/// Coefficient trajectories with columns
/// `regression_name,train_size,b0,b1,predicted,actual,abs_error`.
pub fn trajectory_csv(reports: &[CvReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    w.write_record(["regression_name", "train_size", "b0", "b1", "predicted", "actual", "abs_error"])
        .expect("in-memory csv write");
    for r in reports {
        for s in &r.steps {
            w.write_record([
                r.regression_name.clone(),
                s.train_size.to_string(),
                opt(s.b0),
                opt(s.b1),
                opt(s.predicted),
                format!("{:.16e}", s.actual),
                opt(s.rmse),
            ])
            .expect("in-memory csv write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

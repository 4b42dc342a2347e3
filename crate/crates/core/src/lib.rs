//! Compute-optimal scaling-law fitting for imitation-learning and RL
//! experiment logs.
//!
//! The pipeline runs from [`records`] (ingestion and isoFLOP grouping)
//! through two independent estimators of the compute-optimal allocation:
//! [`isoflop`] (per-budget parabola optima regressed on compute) and
//! [`parametric`] (a quadratic log-metric surface with a closed-form
//! constrained optimum and delta-method intervals). [`forecast`] chains the
//! fitted laws into compute forecasts, [`crossval`] checks them with rolling
//! one-step-ahead validation, and [`synth`] generates ground-truth data for
//! all of the above.

pub mod crossval;
pub mod flops;
pub mod forecast;
pub mod isoflop;
pub mod numerics;
pub mod parametric;
pub mod records;
pub mod synth;

pub use flops::{ConvLayerSpec, FlopRule};
pub use numerics::{OlsFit, ParabolaFit, PowerLaw};
pub use records::{BudgetGroup, ExperimentRecord, Metric, Setting};

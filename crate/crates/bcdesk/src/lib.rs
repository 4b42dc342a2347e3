//! Desk-scale behavioral cloning harness.
//!
//! A 9×9 pellet-collection gridworld with a scripted nearest-pellet expert
//! supplies demonstrations. One-hidden-layer MLP policies of several widths
//! are trained on them with cross-entropy, snapshotted at sample counts that
//! hit fixed FLOP budgets under `C = 6ND`, and scored by validation loss and
//! rollout return. The output is a set of isoFLOP records for the
//! `isoscale` fitting pipeline.

pub mod env;
pub mod experiment;
pub mod policy;
pub mod train;

pub use env::{expert_action, generate_expert_dataset, Action, Dataset, GridWorld};
pub use experiment::{run_isoflop_experiment, Baselines, BcConfig, Cell, ExperimentError, ExperimentOutput};
pub use policy::{param_count, Adam, BcPolicy};
pub use train::{evaluate_expert, evaluate_random, evaluate_return, train_bc, ActionSelection, ReturnStats, TrainConfig};

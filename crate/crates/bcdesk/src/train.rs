//! Behavioral cloning with snapshots, and rollout evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{expert_action, random_action, run_episode, Dataset, N_ACTIONS};
use crate::policy::{Adam, BcPolicy};

/// Validation loss above `DIVERGENCE_FACTOR · ln 4` at this many snapshots
/// in a row aborts training.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
pub const DIVERGENCE_PATIENCE: usize = 3;

/// Mixed into episode seeds to derive the action-sampling stream.
const SAMPLING_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Standard deviation of the input-layer initialization.
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-2, batch_size: 32, init_std: 0.5 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("snapshots must be strictly ascending")]
    SnapshotsNotAscending,
    #[error("snapshot at {snapshot} samples exceeds the sample budget {d_max}")]
    SnapshotBeyondBudget { snapshot: u64, d_max: u64 },
    #[error("batch size must be ≥ 1")]
    BatchSize,
    #[error("training diverged at {samples} samples (validation loss {loss})")]
    Diverged { samples: u64, loss: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub samples: u64,
    pub validation_loss: f64,
    pub policy: BcPolicy,
}

/// Minibatch Adam on the cross-entropy, sampling training pairs by
/// reshuffled epochs, with a validation snapshot after exactly each
/// requested number of samples.
#[allow(clippy::too_many_arguments)]
pub fn train_bc(
    train: &Dataset,
    validation: &Dataset,
    width: usize,
    d_max: u64,
    snapshots: &[u64],
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<Snapshot>, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(TrainError::BatchSize);
    }
    if snapshots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TrainError::SnapshotsNotAscending);
    }
    if let Some(&last) = snapshots.last() {
        if last > d_max {
            return Err(TrainError::SnapshotBeyondBudget { snapshot: last, d_max });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = BcPolicy::init(width, config.init_std, &mut rng);
    let mut opt = Adam::new(policy.params().len(), config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut grad = Vec::new();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut seen = 0u64;
    let mut over_limit = 0;
    let limit = DIVERGENCE_FACTOR * (N_ACTIONS as f64).ln();

    let mut out = Vec::with_capacity(snapshots.len());
    for &target in snapshots {
        while seen < target {
            let size = (config.batch_size as u64).min(target - seen) as usize;
            batch.clear();
            for _ in 0..size {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                batch.push(order[cursor]);
                cursor += 1;
            }
            policy.loss_and_grad(&train.observations, &train.actions, &batch, &mut grad);
            opt.step(policy.params_mut(), &grad);
            seen += size as u64;
        }
        let validation_loss = policy.loss(&validation.observations, &validation.actions);
        if !validation_loss.is_finite() {
            return Err(TrainError::Diverged { samples: seen, loss: validation_loss });
        }
        over_limit = if validation_loss > limit { over_limit + 1 } else { 0 };
        if over_limit >= DIVERGENCE_PATIENCE {
            return Err(TrainError::Diverged { samples: seen, loss: validation_loss });
        }
        out.push(Snapshot { samples: seen, validation_loss, policy: policy.clone() });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSelection {
    /// Argmax, ties to the lowest action index.
    Greedy,
    /// Draw from the policy's action distribution.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub episodes: usize,
}

fn stats(returns: &[f64]) -> ReturnStats {
    let n = returns.len();
    let mean = returns.iter().sum::<f64>() / n.max(1) as f64;
    let se = if n > 1 {
        (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    ReturnStats { mean, se, episodes: n }
}

fn episode_seeds(episodes: usize, seed: u64) -> impl Iterator<Item = u64> {
    (0..episodes as u64).map(move |i| seed.wrapping_add(i))
}

/// Mean return over episodes `seed, seed + 1, …`.
pub fn evaluate_return(policy: &BcPolicy, episodes: usize, seed: u64, selection: ActionSelection) -> ReturnStats {
    let returns: Vec<f64> = episode_seeds(episodes, seed)
        .map(|s| match selection {
            ActionSelection::Greedy => run_episode(s, |w| policy.act_greedy(&w.observation())),
            ActionSelection::Sample => {
                let mut rng = ChaCha8Rng::seed_from_u64(s ^ SAMPLING_SALT);
                run_episode(s, |w| policy.act_sample(&w.observation(), &mut rng))
            }
        })
        .collect();
    stats(&returns)
}

pub fn evaluate_expert(episodes: usize, seed: u64) -> ReturnStats {
    let returns: Vec<f64> = episode_seeds(episodes, seed).map(|s| run_episode(s, expert_action)).collect();
    stats(&returns)
}

/// Uniform random actions, drawn from the same per-episode streams as
/// [`ActionSelection::Sample`].
pub fn evaluate_random(episodes: usize, seed: u64) -> ReturnStats {
    let returns: Vec<f64> = episode_seeds(episodes, seed)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s ^ SAMPLING_SALT);
            run_episode(s, |_| random_action(&mut rng))
        })
        .collect();
    stats(&returns)
}

//! One-hidden-layer MLP policy, its cross-entropy gradient and Adam.
//!
//! Parameters live in one flat vector laid out as
//! `[w1 (OBS_DIM × W, input-major) | b1 (W) | w2 (4 × W, action-major) | b2 (4)]`,
//! so the effective parameter count is `167·W + 4`.

use std::ops::Range;

use rand::Rng;

use crate::env::{Action, SparseObs, N_ACTIONS, OBS_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct BcPolicy {
    width: usize,
    params: Vec<f64>,
}

/// Effective parameter count for hidden width `width`.
pub fn param_count(width: usize) -> u64 {
    (width * (OBS_DIM + N_ACTIONS) + width + N_ACTIONS) as u64
}

impl BcPolicy {
    /// All weights zero: the uniform policy.
    pub fn zeros(width: usize) -> Self {
        assert!(width >= 1, "width must be ≥ 1");
        BcPolicy { width, params: vec![0.0; param_count(width) as usize] }
    }

    /// Uniform input-layer weights with standard deviation `init_std`; the
    /// output layer starts at zero so the initial policy is uniform.
    pub fn init(width: usize, init_std: f64, rng: &mut impl Rng) -> Self {
        let mut policy = Self::zeros(width);
        let half = init_std * 3f64.sqrt();
        for w in &mut policy.params[..OBS_DIM * width] {
            *w = rng.random_range(-half..=half);
        }
        policy
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_params(&self) -> u64 {
        self.params.len() as u64
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn b1_range(&self) -> Range<usize> {
        let start = OBS_DIM * self.width;
        start..start + self.width
    }

    fn w2_range(&self) -> Range<usize> {
        let start = (OBS_DIM + 1) * self.width;
        start..start + N_ACTIONS * self.width
    }

    /// Indices of the softmax (output) layer, weights and biases.
    pub fn softmax_layer(&self) -> Range<usize> {
        self.w2_range().start..self.params.len()
    }

    /// Hidden pre-activations.
    fn pre_activations(&self, obs: &[u16]) -> Vec<f64> {
        let w = self.width;
        let mut pre = self.params[self.b1_range()].to_vec();
        for &i in obs {
            let row = &self.params[i as usize * w..(i as usize + 1) * w];
            for (p, x) in pre.iter_mut().zip(row) {
                *p += x;
            }
        }
        pre
    }

    fn logits_from_hidden(&self, hidden: &[f64]) -> [f64; N_ACTIONS] {
        let w = self.width;
        let w2 = &self.params[self.w2_range()];
        let b2 = &self.params[self.w2_range().end..];
        std::array::from_fn(|k| {
            b2[k] + w2[k * w..(k + 1) * w].iter().zip(hidden).map(|(a, h)| a * h).sum::<f64>()
        })
    }

    pub fn logits(&self, obs: &[u16]) -> [f64; N_ACTIONS] {
        let hidden: Vec<f64> = self.pre_activations(obs).into_iter().map(|p| p.max(0.0)).collect();
        self.logits_from_hidden(&hidden)
    }

    pub fn probs(&self, obs: &[u16]) -> [f64; N_ACTIONS] {
        softmax(&self.logits(obs))
    }

    /// Highest-probability action; ties go to the lowest action index.
    pub fn act_greedy(&self, obs: &[u16]) -> Action {
        let logits = self.logits(obs);
        let mut best = 0;
        for k in 1..N_ACTIONS {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        Action::from_index(best)
    }

    pub fn act_sample(&self, obs: &[u16], rng: &mut impl Rng) -> Action {
        let probs = self.probs(obs);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Action::from_index(k);
            }
        }
        Action::from_index(N_ACTIONS - 1)
    }

    /// Mean cross-entropy of `actions` given `observations`.
    pub fn loss(&self, observations: &[SparseObs], actions: &[u8]) -> f64 {
        let total: f64 = observations
            .iter()
            .zip(actions)
            .map(|(obs, &a)| -log_softmax(&self.logits(obs))[a as usize])
            .sum();
        total / actions.len().max(1) as f64
    }

    /// Mean cross-entropy over the samples at `batch` and its gradient,
    /// written into `grad` (resized and overwritten).
    pub fn loss_and_grad(
        &self,
        observations: &[SparseObs],
        actions: &[u8],
        batch: &[usize],
        grad: &mut Vec<f64>,
    ) -> f64 {
        let w = self.width;
        grad.clear();
        grad.resize(self.params.len(), 0.0);
        let (b1r, w2r) = (self.b1_range(), self.w2_range());
        let w2 = &self.params[w2r.clone()];
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut loss = 0.0;
        let mut dh = vec![0.0; w];
        for &i in batch {
            let obs = &observations[i];
            let target = actions[i] as usize;
            let pre = self.pre_activations(obs);
            let hidden: Vec<f64> = pre.iter().map(|p| p.max(0.0)).collect();
            let log_p = log_softmax(&self.logits_from_hidden(&hidden));
            loss -= log_p[target];

            let dz: [f64; N_ACTIONS] =
                std::array::from_fn(|k| scale * (log_p[k].exp() - if k == target { 1.0 } else { 0.0 }));
            dh.iter_mut().for_each(|d| *d = 0.0);
            for k in 0..N_ACTIONS {
                let row = k * w;
                grad[w2r.end + k] += dz[k];
                for j in 0..w {
                    grad[w2r.start + row + j] += dz[k] * hidden[j];
                    dh[j] += dz[k] * w2[row + j];
                }
            }
            for j in 0..w {
                if pre[j] <= 0.0 {
                    dh[j] = 0.0;
                }
                grad[b1r.start + j] += dh[j];
            }
            for &idx in obs {
                let start = idx as usize * w;
                for (g, d) in grad[start..start + w].iter_mut().zip(&dh) {
                    *g += d;
                }
            }
        }
        loss * scale
    }
}

fn log_softmax(z: &[f64; N_ACTIONS]) -> [f64; N_ACTIONS] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.map(|v| v - lse)
}

fn softmax(z: &[f64; N_ACTIONS]) -> [f64; N_ACTIONS] {
    log_softmax(z).map(f64::exp)
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

//! FLOP accounting rules tying compute `C` to effective parameters `N` and
//! training samples `D`.
//!
//! Only the scaled parts of a network are counted. Linear rules follow the
//! `2ND` forward / `4ND` backward approximation (`6ND`), with actor-learner
//! RL counting the learner forward twice (`8ND`). Convolutional stacks use
//! the per-layer forward formula `2 * h_out * w_out * c_out * k^2 * c_in`
//! (bias excluded) and a backward pass of twice the forward.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlopError {
    #[error("params must be ≥ 1 (got {0})")]
    Params(f64),
    #[error("samples must be > 0 (got {0})")]
    Samples(f64),
    #[error("budget must be > 0 (got {0})")]
    Budget(f64),
    #[error("conv_stack rule needs at least one layer spec")]
    MissingLayers,
    #[error("conv layer field `{0}` must be ≥ 1")]
    Layer(&'static str),
    #[error("conv_stack rule is not invertible in closed form")]
    NotInvertible,
}

/// Shape of one convolutional layer as used for forward-FLOP counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub h_out: u64,
    pub w_out: u64,
    pub c_out: u64,
    pub c_in: u64,
    /// Square kernel side length.
    pub k: u64,
}

impl ConvLayerSpec {
    pub fn validate(&self) -> Result<(), FlopError> {
        for (name, v) in [
            ("h_out", self.h_out),
            ("w_out", self.w_out),
            ("c_out", self.c_out),
            ("c_in", self.c_in),
            ("k", self.k),
        ] {
            if v < 1 {
                return Err(FlopError::Layer(name));
            }
        }
        Ok(())
    }
}

/// Forward FLOPs of one conv layer for a single sample.
pub fn conv_forward_flops(spec: &ConvLayerSpec) -> Result<f64, FlopError> {
    spec.validate()?;
    let per_filter = spec.k * spec.k * spec.c_in;
    Ok(2.0 * (spec.h_out * spec.w_out * spec.c_out) as f64 * per_filter as f64)
}

/// Training FLOPs per sample for a conv stack: forward plus a 2× backward.
pub fn conv_training_flops_per_sample(layers: &[ConvLayerSpec]) -> Result<f64, FlopError> {
    if layers.is_empty() {
        return Err(FlopError::MissingLayers);
    }
    let forward = layers
        .iter()
        .map(conv_forward_flops)
        .sum::<Result<f64, _>>()?;
    Ok(3.0 * forward)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlopRule {
    /// `C = 6ND`.
    LinearBc,
    /// `C = 8ND`.
    LinearRl,
    /// `C = 3 * sum(forward layer FLOPs) * D`.
    ConvStack { layer_specs: Vec<ConvLayerSpec> },
}

impl FlopRule {
    /// The constant `k` in `C = k·N·D`, for linear rules only.
    pub fn denominator(&self) -> Option<f64> {
        match self {
            FlopRule::LinearBc => Some(6.0),
            FlopRule::LinearRl => Some(8.0),
            FlopRule::ConvStack { .. } => None,
        }
    }

    pub fn flops(&self, params: f64, samples: f64) -> Result<f64, FlopError> {
        rule_flops(self, params, samples)
    }

    pub fn samples_for_budget(&self, budget: f64, params: f64) -> Result<f64, FlopError> {
        samples_for_budget(self, budget, params)
    }
}

impl fmt::Display for FlopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlopRule::LinearBc => f.write_str("6nd"),
            FlopRule::LinearRl => f.write_str("8nd"),
            FlopRule::ConvStack { layer_specs } => write!(f, "conv_stack({} layers)", layer_specs.len()),
        }
    }
}

impl FromStr for FlopRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "6nd" | "linear_bc" => Ok(FlopRule::LinearBc),
            "8nd" | "linear_rl" => Ok(FlopRule::LinearRl),
            other => Err(format!("unknown FLOP rule `{other}` (expected 6nd or 8nd)")),
        }
    }
}

fn check_params(params: f64) -> Result<(), FlopError> {
    if params >= 1.0 && params.is_finite() {
        Ok(())
    } else {
        Err(FlopError::Params(params))
    }
}

pub fn rule_flops(rule: &FlopRule, params: f64, samples: f64) -> Result<f64, FlopError> {
    check_params(params)?;
    if !(samples > 0.0 && samples.is_finite()) {
        return Err(FlopError::Samples(samples));
    }
    match rule {
        FlopRule::LinearBc => Ok(6.0 * params * samples),
        FlopRule::LinearRl => Ok(8.0 * params * samples),
        FlopRule::ConvStack { layer_specs } => {
            Ok(conv_training_flops_per_sample(layer_specs)? * samples)
        }
    }
}

/// Invert a linear rule for `D` given `C` and `N`.
pub fn samples_for_budget(rule: &FlopRule, budget: f64, params: f64) -> Result<f64, FlopError> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(FlopError::Budget(budget));
    }
    check_params(params)?;
    let k = rule.denominator().ok_or(FlopError::NotInvertible)?;
    Ok(budget / (k * params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_rules() {
        assert_eq!(rule_flops(&FlopRule::LinearBc, 10.0, 100.0), Ok(6000.0));
        assert_eq!(rule_flops(&FlopRule::LinearRl, 10.0, 100.0), Ok(8000.0));
        assert_eq!(
            rule_flops(&FlopRule::LinearBc, 0.0, 100.0),
            Err(FlopError::Params(0.0))
        );
        assert!(rule_flops(&FlopRule::LinearBc, 10.0, 0.0).is_err());
    }

    #[test]
    fn conv_layer_formula() {
        let spec = ConvLayerSpec { h_out: 20, w_out: 20, c_out: 16, c_in: 8, k: 3 };
        assert_eq!(conv_forward_flops(&spec), Ok(921_600.0));
        let unit = ConvLayerSpec { h_out: 1, w_out: 1, c_out: 1, c_in: 1, k: 1 };
        assert_eq!(conv_forward_flops(&unit), Ok(2.0));
        let bad = ConvLayerSpec { k: 0, ..unit };
        assert_eq!(conv_forward_flops(&bad), Err(FlopError::Layer("k")));
    }

    #[test]
    fn conv_stack_training_is_three_forward() {
        let a = ConvLayerSpec { h_out: 20, w_out: 20, c_out: 16, c_in: 8, k: 3 };
        let b = ConvLayerSpec { h_out: 9, w_out: 9, c_out: 32, c_in: 16, k: 4 };
        let f1 = conv_forward_flops(&a).unwrap();
        let f2 = conv_forward_flops(&b).unwrap();
        let rule = FlopRule::ConvStack { layer_specs: vec![a, b] };
        assert_eq!(rule.flops(1.0, 1.0), Ok(3.0 * (f1 + f2)));
        assert_eq!(rule.flops(1.0, 10.0), Ok(30.0 * (f1 + f2)));
        assert_eq!(
            FlopRule::ConvStack { layer_specs: vec![] }.flops(1.0, 1.0),
            Err(FlopError::MissingLayers)
        );
        assert_eq!(rule.samples_for_budget(1e9, 10.0), Err(FlopError::NotInvertible));
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(samples_for_budget(&FlopRule::LinearBc, 6e6, 1000.0), Ok(1000.0));
        assert_eq!(samples_for_budget(&FlopRule::LinearRl, 8e6, 1000.0), Ok(1000.0));
    }

    #[test]
    fn parse_rule_names() {
        assert_eq!("6nd".parse::<FlopRule>(), Ok(FlopRule::LinearBc));
        assert_eq!("8ND".parse::<FlopRule>(), Ok(FlopRule::LinearRl));
        assert!("4nd".parse::<FlopRule>().is_err());
    }

    proptest! {
        #[test]
        fn linear_inversion_round_trips(log_c in 3.0f64..25.0, log_n in 0.0f64..12.0, rl in any::<bool>()) {
            let rule = if rl { FlopRule::LinearRl } else { FlopRule::LinearBc };
            let c = 10f64.powf(log_c);
            let n = 10f64.powf(log_n).max(1.0);
            let d = rule.samples_for_budget(c, n).unwrap();
            let back = rule.flops(n, d).unwrap();
            prop_assert!(((back - c) / c).abs() <= 4.0 * f64::EPSILON);
        }

        #[test]
        fn strictly_increasing_in_each_argument(n in 1.0f64..1e6, d in 1e-3f64..1e9, bump in 1.0001f64..2.0) {
            let rule = FlopRule::LinearBc;
            let base = rule.flops(n, d).unwrap();
            prop_assert!(rule.flops(n * bump, d).unwrap() > base);
            prop_assert!(rule.flops(n, d * bump).unwrap() > base);
        }
    }
}

//! Rectifiers: plain ReLU and the average-biased ReLU.
//!
//! The average-biased rectifier shifts the threshold by `beta = alpha * mean(x)`,
//! where the mean runs over the entire input volume of one sample:
//!
//! ```text
//! out[p] = x[p] - beta   if x[p] - beta > 0
//!          0             otherwise
//! ```
//!
//! With a negative mean the effective bias is positive and strong negative
//! responses survive; with a non-negative mean weak positive responses are
//! suppressed. `alpha = 0` reduces to plain ReLU.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_ALPHA: f32 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    AbRelu { alpha: f32 },
}

impl ActivationKind {
    pub fn ab_relu(alpha: f32) -> Result<Self> {
        validate_alpha(alpha)?;
        Ok(ActivationKind::AbRelu { alpha })
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        match *self {
            ActivationKind::Relu => Ok(relu(x)),
            ActivationKind::AbRelu { alpha } => ab_relu(x, alpha),
        }
    }
}

impl Default for ActivationKind {
    fn default() -> Self {
        ActivationKind::Relu
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Relu => f.write_str("relu"),
            ActivationKind::AbRelu { alpha } => write!(f, "abrelu:{alpha}"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("relu") {
            return Ok(ActivationKind::Relu);
        }
        let lower = s.to_ascii_lowercase();
        if lower == "abrelu" {
            return ActivationKind::ab_relu(DEFAULT_ALPHA);
        }
        if let Some(alpha) = lower.strip_prefix("abrelu:") {
            let alpha: f32 = alpha.parse().map_err(|_| {
                Error::Config(format!("activation `{s}`: alpha `{alpha}` is not a number"))
            })?;
            return ActivationKind::ab_relu(alpha).map_err(|e| Error::Config(e.to_string()));
        }
        Err(Error::Config(format!(
            "unknown activation `{s}`, expected `relu` or `abrelu:<alpha>`"
        )))
    }
}

impl Serialize for ActivationKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActivationKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn validate_alpha(alpha: f32) -> Result<()> {
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be finite, got {alpha}")));
    }
    if alpha < 0.0 {
        return Err(Error::InvalidArgument(format!("alpha must be non-negative, got {alpha}")));
    }
    Ok(())
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Average-biased ReLU over the whole volume `x`.
pub fn ab_relu(x: &Tensor, alpha: f32) -> Result<Tensor> {
    validate_alpha(alpha)?;
    let beta = f64::from(alpha) * f64::from(x.mean());
    Ok(x.map(|v| {
        let shifted = f64::from(v) - beta;
        if shifted > 0.0 {
            shifted as f32
        } else {
            0.0
        }
    }))
}

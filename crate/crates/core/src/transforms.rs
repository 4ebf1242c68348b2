//! Nonlinear feature transforms applied to measurements before weighting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Entity;

/// A monotone transform from raw feature units onto a comparable scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformKind {
    /// `sqrt(x / divisor)`
    SqrtScaled {
        divisor: f64,
    },
    /// `ln(x + 1)`
    #[serde(rename = "log1p")]
    LogPlusOne,
    /// `(x / divisor)^exponent`, exponent in (0, 1]
    PowerScaled {
        divisor: f64,
        exponent: f64,
    },
    /// `ln(x)`
    Log,
    /// `1 / (1 + exp(-x / divisor))`
    SigmoidScaled {
        divisor: f64,
    },
    Identity,
}

impl TransformKind {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = |d: f64| {
            if d.is_finite() && d > 0.0 {
                Ok(())
            } else {
                Err(format!("divisor must be finite and > 0, got {d}"))
            }
        };
        match *self {
            TransformKind::SqrtScaled { divisor } | TransformKind::SigmoidScaled { divisor } => positive(divisor),
            TransformKind::PowerScaled { divisor, exponent } => {
                positive(divisor)?;
                if exponent > 0.0 && exponent <= 1.0 {
                    Ok(())
                } else {
                    Err(format!("exponent must lie in (0, 1], got {exponent}"))
                }
            }
            TransformKind::LogPlusOne | TransformKind::Log | TransformKind::Identity => Ok(()),
        }
    }

    /// Applies the transform, returning a message on a domain violation.
    pub fn eval(&self, x: f64) -> std::result::Result<f64, String> {
        if !x.is_finite() {
            return Err(format!("non-finite input {x}"));
        }
        let y = match *self {
            TransformKind::SqrtScaled { divisor } => {
                if x < 0.0 {
                    return Err(format!("sqrt_scaled requires x >= 0, got {x}"));
                }
                (x / divisor).sqrt()
            }
            TransformKind::LogPlusOne => {
                if x <= -1.0 {
                    return Err(format!("log1p requires x > -1, got {x}"));
                }
                x.ln_1p()
            }
            TransformKind::PowerScaled { divisor, exponent } => {
                if x < 0.0 {
                    return Err(format!("power_scaled requires x >= 0, got {x}"));
                }
                (x / divisor).powf(exponent)
            }
            TransformKind::Log => {
                if x <= 0.0 {
                    return Err(format!("log requires x > 0, got {x}"));
                }
                x.ln()
            }
            TransformKind::SigmoidScaled { divisor } => 1.0 / (1.0 + (-x / divisor).exp()),
            TransformKind::Identity => x,
        };
        Ok(y)
    }
}

pub fn apply_transform(kind: TransformKind, x: f64) -> Result<f64> {
    kind.eval(x).map_err(|message| Error::Domain {
        feature: String::from("<value>"),
        message,
    })
}

/// Transforms the measurement means of one entity.
pub fn transform_features(entity: &Entity, config: &BTreeMap<String, TransformKind>) -> Result<BTreeMap<String, f64>> {
    let means = entity
        .features
        .iter()
        .map(|(name, value)| (name.clone(), value.mean))
        .collect();
    transform_values(&means, config)
}

/// Transforms arbitrary per-feature values, e.g. one Monte Carlo draw.
pub fn transform_values(
    values: &BTreeMap<String, f64>,
    config: &BTreeMap<String, TransformKind>,
) -> Result<BTreeMap<String, f64>> {
    values
        .iter()
        .map(|(name, &x)| {
            let kind = config.get(name).ok_or_else(|| {
                Error::validation(format!("transforms.{name}"), "no transform configured for feature")
            })?;
            let y = kind.eval(x).map_err(|message| Error::Domain {
                feature: name.clone(),
                message,
            })?;
            Ok((name.clone(), y))
        })
        .collect()
}

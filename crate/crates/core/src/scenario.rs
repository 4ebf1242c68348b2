//! Entities, uncertain measurements and scenario files.
//!
//! A scenario is a JSON document; see `docs/scenario-schema.md` for the
//! schema. Feature maps are `BTreeMap`s, so lexical feature order is the
//! canonical column order for every matrix view built from a scenario.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::allocation::AllocationParams;
use crate::causal::{CounterfactualExample, GraphSpec};
use crate::conflict::ConflictSetup;
use crate::error::{Error, Result};
use crate::transforms::TransformKind;

const SHARE_SUM_TOLERANCE: f64 = 0.5;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// A Gaussian measurement; `±` cells are read as one standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertainValue {
    pub mean: f64,
    #[serde(default)]
    pub std: f64,
}

impl UncertainValue {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::validation("mean", format!("must be finite, got {mean}")));
        }
        if !(std.is_finite() && std >= 0.0) {
            return Err(Error::validation("std", format!("must be finite and >= 0, got {std}")));
        }
        Ok(Self { mean, std })
    }

    pub fn exact(mean: f64) -> Self {
        Self { mean, std: 0.0 }
    }

    /// One draw from `N(mean, std^2)`. A standard normal is always consumed so
    /// that stream positions do not depend on which features happen to be exact.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        if self.std == 0.0 {
            self.mean
        } else {
            self.mean + self.std * z
        }
    }
}

pub type FeatureVector = BTreeMap<String, UncertainValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entity {
    pub name: String,
    pub features: FeatureVector,
}

/// Physical bounds for a feature; sampled values are clamped into them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Bounds {
    pub fn clamp(&self, x: f64) -> f64 {
        let x = self.min.map_or(x, |lo| x.max(lo));
        self.max.map_or(x, |hi| x.min(hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub label: String,
    pub entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub historical_shares: Option<IndexMap<String, f64>>,
    /// Percentage of the outcome held by nobody in `entities`; the listed
    /// shares plus this residual must total 100.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub historical_unallocated: Option<f64>,
    #[serde(default)]
    pub transforms: BTreeMap<String, TransformKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bounds: BTreeMap<String, Bounds>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<AllocationParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub causal: Vec<GraphSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counterfactuals: Vec<CounterfactualExample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict: Option<ConflictSetup>,
}

/// Per-entity sampled feature values, entities in scenario order.
pub type SampledFeatures = IndexMap<String, BTreeMap<String, f64>>;

impl Scenario {
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }

    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn entity_names(&self) -> Vec<String> {
        self.entities.iter().map(|e| e.name.clone()).collect()
    }

    /// Feature names in canonical (lexical) order.
    pub fn feature_names(&self) -> Vec<String> {
        self.entities
            .first()
            .map(|e| e.features.keys().cloned().collect())
            .unwrap_or_default()
    }

    pub fn means(&self) -> SampledFeatures {
        self.entities
            .iter()
            .map(|e| {
                let row = e.features.iter().map(|(f, v)| (f.clone(), v.mean)).collect();
                (e.name.clone(), row)
            })
            .collect()
    }

    /// Checks every scenario invariant, reporting the offending field path.
    pub fn validate(&self) -> Result<()> {
        if self.entities.is_empty() {
            return Err(Error::validation("entities", "at least one entity is required"));
        }
        let mut seen = BTreeSet::new();
        let reference: Vec<&String> = self.entities[0].features.keys().collect();
        for (i, entity) in self.entities.iter().enumerate() {
            if entity.name.trim().is_empty() {
                return Err(Error::validation(format!("entities[{i}].name"), "must not be empty"));
            }
            if !seen.insert(entity.name.as_str()) {
                return Err(Error::validation(
                    format!("entities[{i}].name"),
                    format!("duplicate entity `{}`", entity.name),
                ));
            }
            let names: Vec<&String> = entity.features.keys().collect();
            if names != reference {
                return Err(Error::validation(
                    format!("entities[{i}].features"),
                    format!("feature set {:?} differs from first entity's {:?}", names, reference),
                ));
            }
            for (feature, value) in &entity.features {
                let path = format!("entities[{i}].features.{feature}");
                if !value.mean.is_finite() {
                    return Err(Error::validation(format!("{path}.mean"), "must be finite"));
                }
                if !(value.std.is_finite() && value.std >= 0.0) {
                    return Err(Error::validation(
                        format!("{path}.std"),
                        format!("must be finite and >= 0, got {}", value.std),
                    ));
                }
            }
        }
        let features: BTreeSet<&String> = reference.into_iter().collect();

        if let Some(shares) = &self.historical_shares {
            let keys: BTreeSet<&str> = shares.keys().map(String::as_str).collect();
            if keys != seen {
                return Err(Error::validation(
                    "historical_shares",
                    format!("keys {keys:?} do not match entity names {seen:?}"),
                ));
            }
            if let Some((name, v)) = shares.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::validation(
                    format!("historical_shares.{name}"),
                    format!("must be a finite percentage >= 0, got {v}"),
                ));
            }
            let residual = self.historical_unallocated.unwrap_or(0.0);
            if !(residual.is_finite() && (0.0..100.0).contains(&residual)) {
                return Err(Error::validation(
                    "historical_unallocated",
                    format!("must be a percentage in [0, 100), got {residual}"),
                ));
            }
            let total: f64 = shares.values().sum();
            if (total + residual - 100.0).abs() > SHARE_SUM_TOLERANCE {
                return Err(Error::validation(
                    "historical_shares",
                    format!("shares sum to {total} with {residual} unallocated, expected 100 ± {SHARE_SUM_TOLERANCE}"),
                ));
            }
        } else if self.historical_unallocated.is_some() {
            return Err(Error::validation(
                "historical_unallocated",
                "given without historical_shares",
            ));
        }

        for (name, kind) in &self.transforms {
            if !features.contains(name) {
                return Err(Error::validation(format!("transforms.{name}"), "unknown feature"));
            }
            kind.validate()
                .map_err(|m| Error::validation(format!("transforms.{name}"), m))?;
        }

        if let Some(weights) = &self.weights {
            validate_simplex(weights, "weights")?;
            let keys: BTreeSet<&String> = weights.keys().collect();
            if keys != features {
                return Err(Error::validation(
                    "weights",
                    format!("keys {keys:?} do not match features {features:?}"),
                ));
            }
        }

        for (name, b) in &self.bounds {
            if !features.contains(name) {
                return Err(Error::validation(format!("bounds.{name}"), "unknown feature"));
            }
            if let (Some(lo), Some(hi)) = (b.min, b.max) {
                if lo > hi {
                    return Err(Error::validation(format!("bounds.{name}"), "min exceeds max"));
                }
            }
        }

        for (i, spec) in self.causal.iter().enumerate() {
            spec.build()
                .map_err(|e| Error::validation(format!("causal[{i}]"), e.to_string()))?;
        }
        for (i, example) in self.counterfactuals.iter().enumerate() {
            if self.entity(&example.entity).is_none() {
                return Err(Error::validation(
                    format!("counterfactuals[{i}].entity"),
                    format!("unknown entity `{}`", example.entity),
                ));
            }
            if !self.causal.iter().any(|g| g.label == example.graph) {
                return Err(Error::validation(
                    format!("counterfactuals[{i}].graph"),
                    format!("unknown graph `{}`", example.graph),
                ));
            }
        }
        if let Some(setup) = &self.conflict {
            setup.validate(self)?;
        }
        Ok(())
    }
}

/// Checks that `weights` is a probability vector (>= 0, sums to 1).
pub fn validate_simplex(weights: &BTreeMap<String, f64>, path: &str) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::validation(path, "must not be empty"));
    }
    if let Some((name, w)) = weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::validation(
            format!("{path}.{name}"),
            format!("must be finite and >= 0, got {w}"),
        ));
    }
    let total: f64 = weights.values().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::validation(path, format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json_str(&text, &path.display().to_string())
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenario.to_json_string() + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

const SHIPPED: &[(&str, &str)] = &[
    ("colonial_1890", include_str!("../scenarios/colonial_1890.json")),
    ("punic_218bce", include_str!("../scenarios/punic_218bce.json")),
];

/// Names of the scenario files bundled into the library.
pub fn shipped_names() -> Vec<&'static str> {
    SHIPPED.iter().map(|(n, _)| *n).collect()
}

pub fn load_shipped(name: &str) -> Result<Scenario> {
    let (_, text) = SHIPPED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::validation("scenario", format!("no shipped scenario `{name}`")))?;
    Scenario::from_json_str(text, name)
}

/// Draws every feature of every entity independently from its Gaussian and
/// clamps the draw into the feature's configured bounds.
pub fn sample_features<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> SampledFeatures {
    scenario
        .entities
        .iter()
        .map(|entity| {
            let row = entity
                .features
                .iter()
                .map(|(feature, value)| {
                    let draw = value.sample(rng);
                    let draw = match scenario.bounds.get(feature) {
                        Some(b) => b.clamp(draw),
                        None => draw,
                    };
                    (feature.clone(), draw)
                })
                .collect();
            (entity.name.clone(), row)
        })
        .collect()
}

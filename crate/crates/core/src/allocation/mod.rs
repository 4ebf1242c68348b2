//! Cooperative allocation games, Shapley values and discrepancy analysis.

mod discrepancy;
mod game;
mod shapley;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use discrepancy::{
    conflict_probability, discrepancy_report, tension_factor, ConflictParams, DiscrepancyReport, DiscrepancyRow,
    TensionParams,
};
pub use game::{Characteristic, CoalitionGame, MAX_EXACT_PLAYERS};
pub use shapley::{shapley_exact, shapley_sampled, shapley_values, shares_from, ShapleyResult};

use crate::error::{Error, Result};
use crate::inference::AttentionSpec;
use crate::scenario::{validate_simplex, Scenario};
use crate::transforms::transform_values;

/// Allocation-stage constants carried by a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationParams {
    pub tension: TensionParams,
    pub conflict: ConflictParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionSpec>,
}

/// `P = sum_f w_f * x_f` over already-transformed features.
pub fn power_index(transformed: &BTreeMap<String, f64>, weights: &BTreeMap<String, f64>) -> Result<f64> {
    transformed
        .iter()
        .map(|(feature, x)| {
            weights
                .get(feature)
                .map(|w| w * x)
                .ok_or_else(|| Error::validation(format!("weights.{feature}"), "missing weight"))
        })
        .sum()
}

/// Power indices of every entity from per-entity raw feature values.
pub fn power_indices(
    scenario: &Scenario,
    raw: &crate::scenario::SampledFeatures,
    weights: &BTreeMap<String, f64>,
) -> Result<Vec<f64>> {
    raw.iter()
        .map(|(_, row)| power_index(&transform_values(row, &scenario.transforms)?, weights))
        .collect()
}

/// Additive game whose power indices are weighted sums of transformed
/// feature means.
pub fn build_power_game(scenario: &Scenario, weights: &BTreeMap<String, f64>) -> Result<CoalitionGame> {
    validate_simplex(weights, "weights")?;
    let features = scenario.feature_names();
    if let Some(f) = features.iter().find(|f| !weights.contains_key(*f)) {
        return Err(Error::validation(format!("weights.{f}"), "missing weight"));
    }
    if let Some(f) = weights.keys().find(|f| !features.contains(f)) {
        return Err(Error::validation(format!("weights.{f}"), "unknown feature"));
    }
    let powers = power_indices(scenario, &scenario.means(), weights)?;
    CoalitionGame::additive(scenario.entity_names(), powers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_shipped;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_json_str(text, "inline").unwrap()
    }

    #[test]
    fn single_entity_identity_power_is_the_mean() {
        let s = scenario(
            r#"{"label": "t", "entities": [{"name": "A", "features": {"x": {"mean": 4.25}}}],
                "transforms": {"x": {"kind": "identity"}}}"#,
        );
        let g = build_power_game(&s, &[("x".to_string(), 1.0)].into_iter().collect()).unwrap();
        assert_eq!(g.powers().unwrap(), &[4.25]);
    }

    #[test]
    fn identical_entities_get_equal_shares() {
        let s = scenario(
            r#"{"label": "t", "entities": [
                    {"name": "A", "features": {"x": {"mean": 3}, "y": {"mean": 9}}},
                    {"name": "B", "features": {"x": {"mean": 3}, "y": {"mean": 9}}}],
                "transforms": {"x": {"kind": "log1p"}, "y": {"kind": "sqrt_scaled", "divisor": 1}}}"#,
        );
        let w = [("x".to_string(), 0.3), ("y".to_string(), 0.7)].into_iter().collect();
        let r = shapley_exact(&build_power_game(&s, &w).unwrap()).unwrap();
        assert!((r.shares["A"] - 50.0).abs() < 1e-12);
        assert!((r.shares["B"] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn off_simplex_weights_rejected() {
        let s = load_shipped("colonial_1890").unwrap();
        let mut w = s.weights.clone().unwrap();
        for v in w.values_mut() {
            *v *= 2.0;
        }
        assert!(build_power_game(&s, &w).is_err());
        let mut w = s.weights.clone().unwrap();
        w.remove("gdp");
        w.insert("naval".into(), w["naval"] + s.weights.as_ref().unwrap()["gdp"]);
        assert!(build_power_game(&s, &w).unwrap_err().to_string().contains("gdp"));
    }

    #[test]
    fn colonial_shares_are_proportional_to_power() {
        let s = load_shipped("colonial_1890").unwrap();
        let g = build_power_game(&s, s.weights.as_ref().unwrap()).unwrap();
        let powers = g.powers().unwrap().to_vec();
        let total: f64 = powers.iter().sum();
        let r = shapley_exact(&g).unwrap();
        for (p, share) in powers.iter().zip(r.shares.values()) {
            assert!((100.0 * p / total - share).abs() < 1e-9);
        }
    }
}

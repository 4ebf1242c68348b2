//! Faction power, commander effectiveness and battle outcome modeling.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{sample_features, validate_simplex, Scenario, UncertainValue};
use crate::uncertainty::{mc_run, DistributionSummary, MCConfig};

pub const TRAIT_NAMES: [&str; 7] = [
    "strategic_brilliance",
    "tactical_genius",
    "logistics",
    "inspiration",
    "adaptability",
    "political_support",
    "resource_management",
];

const TRAIT_MAX: f64 = 10.0;

fn default_gamma() -> f64 {
    0.3
}

fn default_trait_std() -> f64 {
    0.3
}

/// Trait scores on a 0-10 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommanderTraits {
    pub strategic_brilliance: f64,
    pub tactical_genius: f64,
    pub logistics: f64,
    pub inspiration: f64,
    pub adaptability: f64,
    pub political_support: f64,
    pub resource_management: f64,
}

impl CommanderTraits {
    pub fn from_array(t: [f64; 7]) -> Self {
        Self {
            strategic_brilliance: t[0],
            tactical_genius: t[1],
            logistics: t[2],
            inspiration: t[3],
            adaptability: t[4],
            political_support: t[5],
            resource_management: t[6],
        }
    }

    /// Scores in `TRAIT_NAMES` order.
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.strategic_brilliance,
            self.tactical_genius,
            self.logistics,
            self.inspiration,
            self.adaptability,
            self.political_support,
            self.resource_management,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommanderProfile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faction: Option<String>,
    pub traits: CommanderTraits,
}

impl CommanderProfile {
    pub fn validate(&self, path: &str) -> Result<()> {
        for (name, t) in TRAIT_NAMES.iter().zip(self.traits.to_array()) {
            if !(0.0..=TRAIT_MAX).contains(&t) {
                return Err(Error::validation(
                    format!("{path}.traits.{name}"),
                    format!("must lie in [0, 10], got {t}"),
                ));
            }
        }
        Ok(())
    }

    /// Draws every trait from `N(score, std^2)` clamped to [0, 10].
    pub fn sample<R: Rng + ?Sized>(&self, std: f64, rng: &mut R) -> CommanderProfile {
        let drawn = self
            .traits
            .to_array()
            .map(|t| UncertainValue { mean: t, std }.sample(rng).clamp(0.0, TRAIT_MAX));
        CommanderProfile {
            traits: CommanderTraits::from_array(drawn),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportWeights {
    pub political_support: f64,
    pub resource_management: f64,
}

impl Default for SupportWeights {
    fn default() -> Self {
        Self {
            political_support: 0.5,
            resource_management: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BattleSpec {
    pub name: String,
    pub attacker: String,
    pub defender: String,
    pub attacker_commander: String,
    pub defender_commander: String,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

/// Conflict-analysis data carried by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictSetup {
    /// Divisors mapping each raw faction feature onto the index scale.
    pub scales: BTreeMap<String, f64>,
    pub commanders: Vec<CommanderProfile>,
    pub trait_weights: BTreeMap<String, f64>,
    #[serde(default = "default_trait_std")]
    pub trait_std: f64,
    #[serde(default)]
    pub support_weights: SupportWeights,
    #[serde(default)]
    pub battles: Vec<BattleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparisons: Vec<ComparisonSpec>,
}

/// A pair of commanders to compare side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    pub first: String,
    pub second: String,
}

impl ConflictSetup {
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let weights = scenario
            .weights
            .as_ref()
            .ok_or_else(|| Error::validation("weights", "faction weights are required for conflict analysis"))?;
        for feature in weights.keys() {
            match self.scales.get(feature) {
                Some(s) if s.is_finite() && *s > 0.0 => {}
                Some(s) => {
                    return Err(Error::validation(
                        format!("conflict.scales.{feature}"),
                        format!("must be finite and > 0, got {s}"),
                    ))
                }
                None => {
                    return Err(Error::validation(
                        format!("conflict.scales.{feature}"),
                        "missing scale constant",
                    ))
                }
            }
        }
        check_trait_weights(&self.trait_weights, "conflict.trait_weights")?;
        if !(self.trait_std.is_finite() && self.trait_std >= 0.0) {
            return Err(Error::validation("conflict.trait_std", "must be finite and >= 0"));
        }
        check_support_weights(&self.support_weights, "conflict.support_weights")?;
        let mut names = BTreeSet::new();
        for (i, c) in self.commanders.iter().enumerate() {
            let path = format!("conflict.commanders[{i}]");
            if !names.insert(c.name.as_str()) {
                return Err(Error::validation(
                    format!("{path}.name"),
                    format!("duplicate commander `{}`", c.name),
                ));
            }
            c.validate(&path)?;
            if let Some(f) = &c.faction {
                if scenario.entity(f).is_none() {
                    return Err(Error::validation(
                        format!("{path}.faction"),
                        format!("unknown faction `{f}`"),
                    ));
                }
            }
        }
        for (i, b) in self.battles.iter().enumerate() {
            self.check_battle(b, scenario, &format!("conflict.battles[{i}]"))?;
        }
        for (i, c) in self.comparisons.iter().enumerate() {
            for (field, name) in [("first", &c.first), ("second", &c.second)] {
                if self.commander(name).is_none() {
                    return Err(Error::validation(
                        format!("conflict.comparisons[{i}].{field}"),
                        format!("unknown commander `{name}`"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn check_battle(&self, battle: &BattleSpec, scenario: &Scenario, path: &str) -> Result<()> {
        for (field, faction) in [("attacker", &battle.attacker), ("defender", &battle.defender)] {
            if scenario.entity(faction).is_none() {
                return Err(Error::validation(
                    format!("{path}.{field}"),
                    format!("unknown faction `{faction}`"),
                ));
            }
        }
        if battle.attacker == battle.defender {
            return Err(Error::validation(
                format!("{path}.defender"),
                "attacker and defender must differ",
            ));
        }
        for (field, name) in [
            ("attacker_commander", &battle.attacker_commander),
            ("defender_commander", &battle.defender_commander),
        ] {
            if self.commander(name).is_none() {
                return Err(Error::validation(
                    format!("{path}.{field}"),
                    format!("unknown commander `{name}`"),
                ));
            }
        }
        if !battle.gamma.is_finite() {
            return Err(Error::validation(format!("{path}.gamma"), "must be finite"));
        }
        Ok(())
    }

    pub fn commander(&self, name: &str) -> Option<&CommanderProfile> {
        self.commanders.iter().find(|c| c.name == name)
    }

    pub fn battle(&self, name: &str) -> Option<&BattleSpec> {
        self.battles.iter().find(|b| b.name == name)
    }
}

fn check_trait_weights(weights: &BTreeMap<String, f64>, path: &str) -> Result<()> {
    let expected: BTreeSet<&str> = TRAIT_NAMES.into_iter().collect();
    let got: BTreeSet<&str> = weights.keys().map(String::as_str).collect();
    if expected != got {
        return Err(Error::validation(
            path,
            format!("expected exactly the traits {TRAIT_NAMES:?}"),
        ));
    }
    validate_simplex(weights, path)
}

fn check_support_weights(w: &SupportWeights, path: &str) -> Result<()> {
    let map = BTreeMap::from([
        ("political_support".to_string(), w.political_support),
        ("resource_management".to_string(), w.resource_management),
    ]);
    validate_simplex(&map, path)
}

/// `P = sum_f w_f * x_f / scale_f` over the weighted features.
pub fn faction_power(
    features: &BTreeMap<String, f64>,
    weights: &BTreeMap<String, f64>,
    scales: &BTreeMap<String, f64>,
) -> Result<f64> {
    weights.iter().try_fold(0.0, |acc, (f, w)| {
        let scale = scales
            .get(f)
            .ok_or_else(|| Error::validation(format!("conflict.scales.{f}"), "missing scale constant"))?;
        let x = features
            .get(f)
            .ok_or_else(|| Error::validation(format!("features.{f}"), "missing faction feature"))?;
        Ok(acc + w * x / scale)
    })
}

fn setup(scenario: &Scenario) -> Result<(&ConflictSetup, &BTreeMap<String, f64>)> {
    let setup = scenario
        .conflict
        .as_ref()
        .ok_or_else(|| Error::validation("conflict", "scenario has no conflict section"))?;
    let weights = scenario
        .weights
        .as_ref()
        .ok_or_else(|| Error::validation("weights", "faction weights are required"))?;
    Ok((setup, weights))
}

/// Point power index (on means) and Monte Carlo spread for every faction.
pub fn faction_powers(
    scenario: &Scenario,
    config: &MCConfig,
) -> Result<IndexMap<String, (UncertainValue, DistributionSummary)>> {
    let (setup, weights) = setup(scenario)?;
    let points = scenario
        .means()
        .iter()
        .map(|(name, row)| Ok((name.clone(), faction_power(row, weights, &setup.scales)?)))
        .collect::<Result<Vec<_>>>()?;
    let replicates = mc_run(config, |_, rng| {
        sample_features(scenario, rng)
            .values()
            .map(|row| faction_power(row, weights, &setup.scales))
            .collect::<Result<Vec<f64>>>()
    })?;
    points
        .into_iter()
        .enumerate()
        .map(|(i, (name, point))| {
            let column: Vec<f64> = replicates.iter().map(|r| r[i]).collect();
            let summary = DistributionSummary::from_values(&column, config.confidence)?;
            Ok((
                name,
                (
                    UncertainValue {
                        mean: point,
                        std: summary.std,
                    },
                    summary,
                ),
            ))
        })
        .collect()
}

/// `E = sum_j w_j t_j` with simplex weights over the seven traits.
pub fn commander_effectiveness(profile: &CommanderProfile, trait_weights: &BTreeMap<String, f64>) -> Result<f64> {
    check_trait_weights(trait_weights, "trait_weights")?;
    Ok(effectiveness_unchecked(profile, trait_weights))
}

fn effectiveness_unchecked(profile: &CommanderProfile, trait_weights: &BTreeMap<String, f64>) -> f64 {
    TRAIT_NAMES
        .iter()
        .zip(profile.traits.to_array())
        .map(|(name, t)| trait_weights[*name] * t)
        .sum()
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `sigma(ln(P_att / P_def) + gamma * E_att / E_def)`. The two orientations of
/// a battle are deliberately not normalized against each other.
pub fn win_probability(p_att: f64, p_def: f64, e_att: f64, e_def: f64, gamma: f64) -> Result<f64> {
    for (name, v) in [
        ("attacker power", p_att),
        ("defender power", p_def),
        ("attacker effectiveness", e_att),
        ("defender effectiveness", e_def),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain {
                feature: name.into(),
                message: format!("must be positive, got {v}"),
            });
        }
    }
    Ok(logistic((p_att / p_def).ln() + gamma * e_att / e_def))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideValues {
    pub power: f64,
    pub effectiveness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BattleOutcome {
    pub battle: String,
    pub attacker: SideValues,
    pub defender: SideValues,
    /// Win probability evaluated on point values.
    pub deterministic: f64,
    pub simulated: DistributionSummary,
}

impl BattleOutcome {
    pub fn power_ratio(&self) -> f64 {
        self.attacker.power / self.defender.power
    }
}

struct Sides<'a> {
    attacker: &'a str,
    defender: &'a str,
    att_cmd: &'a CommanderProfile,
    def_cmd: &'a CommanderProfile,
}

fn resolve<'a>(setup: &'a ConflictSetup, scenario: &Scenario, battle: &'a BattleSpec) -> Result<Sides<'a>> {
    setup.check_battle(battle, scenario, "battle")?;
    Ok(Sides {
        attacker: &battle.attacker,
        defender: &battle.defender,
        att_cmd: setup.commander(&battle.attacker_commander).expect("checked"),
        def_cmd: setup.commander(&battle.defender_commander).expect("checked"),
    })
}

/// Draws faction features and commander traits for one replicate and returns
/// (attacker, defender) side values.
fn sample_sides<R: Rng + ?Sized>(
    scenario: &Scenario,
    setup: &ConflictSetup,
    weights: &BTreeMap<String, f64>,
    sides: &Sides,
    rng: &mut R,
) -> Result<(SideValues, SideValues)> {
    let features = sample_features(scenario, rng);
    let att_cmd = sides.att_cmd.sample(setup.trait_std, rng);
    let def_cmd = sides.def_cmd.sample(setup.trait_std, rng);
    Ok((
        SideValues {
            power: faction_power(&features[sides.attacker], weights, &setup.scales)?,
            effectiveness: effectiveness_unchecked(&att_cmd, &setup.trait_weights),
        },
        SideValues {
            power: faction_power(&features[sides.defender], weights, &setup.scales)?,
            effectiveness: effectiveness_unchecked(&def_cmd, &setup.trait_weights),
        },
    ))
}

fn point_sides(
    scenario: &Scenario,
    setup: &ConflictSetup,
    weights: &BTreeMap<String, f64>,
    sides: &Sides,
) -> Result<(SideValues, SideValues)> {
    let means = scenario.means();
    Ok((
        SideValues {
            power: faction_power(&means[sides.attacker], weights, &setup.scales)?,
            effectiveness: effectiveness_unchecked(sides.att_cmd, &setup.trait_weights),
        },
        SideValues {
            power: faction_power(&means[sides.defender], weights, &setup.scales)?,
            effectiveness: effectiveness_unchecked(sides.def_cmd, &setup.trait_weights),
        },
    ))
}

/// Monte Carlo battle: faction features and commander traits are resampled in
/// every replicate and the win probability is averaged.
pub fn battle_simulate(battle: &BattleSpec, scenario: &Scenario, config: &MCConfig) -> Result<BattleOutcome> {
    let (setup, weights) = setup(scenario)?;
    let sides = resolve(setup, scenario, battle)?;
    let (attacker, defender) = point_sides(scenario, setup, weights, &sides)?;
    let deterministic = win_probability(
        attacker.power,
        defender.power,
        attacker.effectiveness,
        defender.effectiveness,
        battle.gamma,
    )?;
    let draws = mc_run(config, |_, rng| {
        let (a, d) = sample_sides(scenario, setup, weights, &sides, rng)?;
        win_probability(a.power, d.power, a.effectiveness, d.effectiveness, battle.gamma)
    })?;
    Ok(BattleOutcome {
        battle: battle.name.clone(),
        attacker,
        defender,
        deterministic,
        simulated: DistributionSummary::from_values(&draws, config.confidence)?,
    })
}

/// `B = rho * P / P_max + kappa * E / E_max` per side, then
/// `sigma(ln(B_att / B_def))`.
pub fn blend_probability(
    attacker: SideValues,
    defender: SideValues,
    resource_weight: f64,
    commander_weight: f64,
) -> Result<f64> {
    let p_max = attacker.power.max(defender.power);
    let e_max = attacker.effectiveness.max(defender.effectiveness);
    let score = |s: SideValues| resource_weight * s.power / p_max + commander_weight * s.effectiveness / e_max;
    let (b_att, b_def) = (score(attacker), score(defender));
    if !(b_att > 0.0 && b_def > 0.0) {
        return Err(Error::Domain {
            feature: "blend".into(),
            message: "blended scores must be positive".into(),
        });
    }
    Ok(logistic((b_att / b_def).ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendOutcome {
    pub battle: String,
    pub resource_weight: f64,
    pub commander_weight: f64,
    pub deterministic: f64,
    pub simulated: DistributionSummary,
}

pub fn scenario_blend(
    resource_weight: f64,
    commander_weight: f64,
    scenario: &Scenario,
    battle: &BattleSpec,
    config: &MCConfig,
) -> Result<BlendOutcome> {
    let blend = BTreeMap::from([
        ("resource".to_string(), resource_weight),
        ("commander".to_string(), commander_weight),
    ]);
    validate_simplex(&blend, "blend")?;
    let (setup, weights) = setup(scenario)?;
    let sides = resolve(setup, scenario, battle)?;
    let (a, d) = point_sides(scenario, setup, weights, &sides)?;
    let deterministic = blend_probability(a, d, resource_weight, commander_weight)?;
    let draws = mc_run(config, |_, rng| {
        let (a, d) = sample_sides(scenario, setup, weights, &sides, rng)?;
        blend_probability(a, d, resource_weight, commander_weight)
    })?;
    Ok(BlendOutcome {
        battle: battle.name.clone(),
        resource_weight,
        commander_weight,
        deterministic,
        simulated: DistributionSummary::from_values(&draws, config.confidence)?,
    })
}

pub fn support_score(profile: &CommanderProfile, weights: &SupportWeights) -> f64 {
    weights.political_support * profile.traits.political_support
        + weights.resource_management * profile.traits.resource_management
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommanderComparison {
    pub first: String,
    pub second: String,
    pub effectiveness: (f64, f64),
    /// Relative change from the first to the second commander, in percent.
    pub delta_pct: f64,
    pub support: (f64, f64),
}

pub fn commander_compare(
    a: &CommanderProfile,
    b: &CommanderProfile,
    trait_weights: &BTreeMap<String, f64>,
    support_weights: &SupportWeights,
) -> Result<CommanderComparison> {
    check_support_weights(support_weights, "support_weights")?;
    let ea = commander_effectiveness(a, trait_weights)?;
    let eb = commander_effectiveness(b, trait_weights)?;
    if ea <= 0.0 {
        return Err(Error::Domain {
            feature: a.name.clone(),
            message: "zero effectiveness".into(),
        });
    }
    Ok(CommanderComparison {
        first: a.name.clone(),
        second: b.name.clone(),
        effectiveness: (ea, eb),
        delta_pct: 100.0 * (eb - ea) / ea,
        support: (support_score(a, support_weights), support_score(b, support_weights)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(name: &str, t: [f64; 7]) -> CommanderProfile {
        CommanderProfile {
            name: name.into(),
            faction: None,
            traits: CommanderTraits::from_array(t),
        }
    }

    fn equal_weights() -> BTreeMap<String, f64> {
        TRAIT_NAMES.iter().map(|n| (n.to_string(), 1.0 / 7.0)).collect()
    }

    fn scipio() -> CommanderProfile {
        profile("Scipio", [8.5, 8.8, 8.5, 8.0, 8.0, 8.5, 8.0])
    }

    fn hannibal() -> CommanderProfile {
        profile("Hannibal", [9.8, 9.5, 7.5, 9.0, 9.2, 6.0, 6.5])
    }

    #[test]
    fn scipio_equal_weights() {
        let e = commander_effectiveness(&scipio(), &equal_weights()).unwrap();
        assert!((e - 58.3 / 7.0).abs() < 1e-12);
        assert_eq!(format!("{e:.2}"), "8.33");
    }

    #[test]
    fn concentrated_weight_picks_trait() {
        let mut w: BTreeMap<String, f64> = TRAIT_NAMES.iter().map(|n| (n.to_string(), 0.0)).collect();
        w.insert("logistics".into(), 1.0);
        assert_eq!(commander_effectiveness(&hannibal(), &w).unwrap(), 7.5);
    }

    #[test]
    fn off_simplex_trait_weights_rejected() {
        let mut w = equal_weights();
        w.insert("logistics".into(), 0.5);
        assert!(commander_effectiveness(&scipio(), &w).is_err());
        w.remove("logistics");
        assert!(commander_effectiveness(&scipio(), &w).is_err());
    }

    #[test]
    fn win_probability_examples() {
        assert_eq!(win_probability(2.0, 2.0, 7.0, 7.0, 0.0).unwrap(), 0.5);
        let p = win_probability(5.47, 5.15, 8.5, 8.33, 0.3).unwrap();
        let z: f64 = (5.47f64 / 5.15).ln() + 0.3 * 8.5 / 8.33;
        assert!((p - 1.0 / (1.0 + (-z).exp())).abs() < 1e-15);
        assert!((p - 0.5906).abs() < 5e-5);
        let doubled = win_probability(10.94, 10.3, 8.5, 8.33, 0.3).unwrap();
        assert!((p - doubled).abs() < 1e-15);
        assert!(win_probability(0.0, 1.0, 1.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn orientations_do_not_sum_to_one() {
        let forward = win_probability(5.47, 5.15, 8.5, 8.33, 0.3).unwrap();
        let backward = win_probability(5.15, 5.47, 8.33, 8.5, 0.3).unwrap();
        assert!((forward + backward - 1.0).abs() > 0.1);
    }

    #[test]
    fn support_defaults() {
        assert_eq!(support_score(&hannibal(), &SupportWeights::default()), 6.25);
        let c = commander_compare(&scipio(), &scipio(), &equal_weights(), &SupportWeights::default()).unwrap();
        assert_eq!(c.delta_pct, 0.0);
    }

    #[test]
    fn faction_power_zero_and_missing_scale() {
        let w = BTreeMap::from([("a".to_string(), 0.5), ("b".to_string(), 0.5)]);
        let s = BTreeMap::from([("a".to_string(), 2.0), ("b".to_string(), 4.0)]);
        let zero = BTreeMap::from([("a".to_string(), 0.0), ("b".to_string(), 0.0)]);
        assert_eq!(faction_power(&zero, &w, &s).unwrap(), 0.0);
        let x = BTreeMap::from([("a".to_string(), 2.0), ("b".to_string(), 8.0)]);
        assert_eq!(faction_power(&x, &w, &s).unwrap(), 1.5);
        assert!(faction_power(&x, &w, &BTreeMap::from([("a".to_string(), 2.0)])).is_err());
    }

    #[test]
    fn blend_reduces_to_power_logistic() {
        let a = SideValues {
            power: 5.0,
            effectiveness: 8.0,
        };
        let d = SideValues {
            power: 4.0,
            effectiveness: 9.0,
        };
        let p = blend_probability(a, d, 1.0, 0.0).unwrap();
        assert!((p - logistic((5.0f64 / 4.0).ln())).abs() < 1e-15);
        assert!(blend_probability(a, d, 0.0, 1.0).unwrap() < 0.5);
        assert!(blend_probability(d, a, 0.0, 1.0).unwrap() > 0.5);
    }
}

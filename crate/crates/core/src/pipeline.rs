//! End-to-end analyses assembled from the individual modules.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::allocation::{
    build_power_game, conflict_probability, discrepancy_report, power_indices, shapley_exact, CoalitionGame,
    DiscrepancyReport, ShapleyResult,
};
use crate::causal::{sensitivity_over_dags, CausalGraph, CounterfactualQuery, NodeValues, ValueSpace};
use crate::error::{Error, Result};
use crate::inference::{
    attention_forward, bayes_posterior, calibrate_weights, design_matrix, forest_importance, AttentionWeights,
    Calibration, FeatureImportance, ForestConfig,
};
use crate::scenario::Scenario;
use crate::transforms::apply_transform;
use crate::uncertainty::{mc_propagate, DistributionSummary, MCConfig};

pub fn historical_shares(scenario: &Scenario) -> Result<&IndexMap<String, f64>> {
    scenario
        .historical_shares
        .as_ref()
        .ok_or_else(|| Error::validation("historical_shares", "this analysis needs historical shares"))
}

pub fn scenario_weights(scenario: &Scenario) -> Result<&BTreeMap<String, f64>> {
    scenario
        .weights
        .as_ref()
        .ok_or_else(|| Error::validation("weights", "scenario has no feature weights"))
}

/// Shares for one realization of the features, via exact Shapley values of
/// the additive power game.
fn shares_for(
    scenario: &Scenario,
    raw: &crate::scenario::SampledFeatures,
    weights: &BTreeMap<String, f64>,
) -> Result<IndexMap<String, f64>> {
    let powers = power_indices(scenario, raw, weights)?;
    let game = CoalitionGame::additive(scenario.entity_names(), powers)?;
    Ok(shapley_exact(&game)?.shares)
}

/// Monte Carlo distribution of every entity's share.
pub fn share_uncertainty(
    scenario: &Scenario,
    weights: &BTreeMap<String, f64>,
    config: &MCConfig,
) -> Result<IndexMap<String, DistributionSummary>> {
    mc_propagate(scenario, |raw| shares_for(scenario, raw, weights), config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub weights: BTreeMap<String, f64>,
    pub powers: IndexMap<String, f64>,
    pub shapley: ShapleyResult,
    pub report: DiscrepancyReport,
    pub tension: Option<f64>,
    pub conflict_probability: Option<f64>,
    pub uncertainty: Option<IndexMap<String, DistributionSummary>>,
}

/// Transforms, weights, game, Shapley shares, discrepancy, tension and
/// conflict probability; Monte Carlo intervals when `mc` is given.
pub fn allocate(
    scenario: &Scenario,
    weights: &BTreeMap<String, f64>,
    mc: Option<&MCConfig>,
) -> Result<AllocationOutcome> {
    let historical = historical_shares(scenario)?;
    let game = build_power_game(scenario, weights)?;
    let shapley = shapley_exact(&game)?;
    let powers = game
        .players()
        .iter()
        .cloned()
        .zip(game.powers().expect("power games are additive").iter().copied())
        .collect();
    let mut report = discrepancy_report(&shapley.shares, historical)?;
    let uncertainty = mc
        .map(|config| share_uncertainty(scenario, weights, config))
        .transpose()?;
    if let Some(summaries) = &uncertainty {
        let intervals = summaries.iter().map(|(k, s)| (k.clone(), (s.lower, s.upper))).collect();
        report = report.with_intervals(&intervals);
    }
    let (tension, conflict) = match &scenario.allocation {
        Some(params) => {
            let t = crate::allocation::tension_factor(&report, params.tension);
            (Some(t), Some(conflict_probability(t, params.conflict)))
        }
        None => (None, None),
    };
    Ok(AllocationOutcome {
        weights: weights.clone(),
        powers,
        shapley,
        report,
        tension,
        conflict_probability: conflict,
        uncertainty,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsOutcome {
    pub importances: FeatureImportance,
    pub calibration: Calibration,
    /// Mean absolute share error of the calibrated weights, in points.
    pub mae: f64,
}

/// Forest importances on transformed means, used to start the simplex
/// calibration against the historical shares.
pub fn learn_weights(scenario: &Scenario, forest: &ForestConfig) -> Result<WeightsOutcome> {
    let historical = historical_shares(scenario)?;
    let rows = design_matrix(scenario)?;
    let x = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let y: Vec<f64> = scenario.entity_names().iter().map(|e| historical[e]).collect();
    let importances = forest_importance(&x, &y, &scenario.feature_names(), forest)?;
    let calibration = calibrate_weights(&importances.importances, scenario)?;
    let game = build_power_game(scenario, &calibration.weights)?;
    let report = discrepancy_report(&shapley_exact(&game)?.shares, historical)?;
    Ok(WeightsOutcome {
        importances,
        calibration,
        mae: report.mae,
    })
}

/// Per-head attention over entities, computed on column-standardized
/// transformed features. Reported as context only; shares do not use it.
pub fn attention_diagnostic(scenario: &Scenario) -> Result<Option<Vec<DMatrix<f64>>>> {
    let Some(spec) = scenario.allocation.as_ref().and_then(|a| a.attention) else {
        return Ok(None);
    };
    let rows = design_matrix(scenario)?;
    let (n, d) = (rows.len(), rows[0].len());
    let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for mut column in x.column_iter_mut() {
        let mean = column.mean();
        let std = (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        column.apply(|v| *v = if std > 0.0 { (*v - mean) / std } else { *v - mean });
    }
    let weights = AttentionWeights::seeded_orthogonal(d, spec)?;
    Ok(Some(attention_forward(&x, &weights)?.attention))
}

/// Leave-one-out Bayesian linear regression of historical shares on
/// transformed features (prior `N(0, I)`, unit noise variance). Each entity's
/// share is predicted from a fit on the others.
pub fn regression_shares(scenario: &Scenario) -> Result<IndexMap<String, f64>> {
    let historical = historical_shares(scenario)?;
    let rows = design_matrix(scenario)?;
    let names = scenario.entity_names();
    let (n, d) = (rows.len(), rows[0].len());
    if n < 2 {
        return Err(Error::validation(
            "entities",
            "leave-one-out regression needs two entities",
        ));
    }
    let prior_mean = DVector::zeros(d);
    let prior_cov = DMatrix::identity(d, d);
    (0..n)
        .map(|held| {
            let train: Vec<usize> = (0..n).filter(|&i| i != held).collect();
            let x = DMatrix::from_fn(train.len(), d, |r, j| rows[train[r]][j]);
            let y = DVector::from_iterator(train.len(), train.iter().map(|&i| historical[&names[i]]));
            let posterior = bayes_posterior(&x, &y, &prior_mean, &prior_cov, 1.0)?;
            let prediction: f64 = rows[held].iter().zip(posterior.mean.iter()).map(|(a, b)| a * b).sum();
            Ok((names[held].clone(), prediction))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Attention,
    Shapley,
    MonteCarlo,
    Causal,
    EqualWeights,
}

impl Ablation {
    /// Report order.
    pub const ALL: [Ablation; 5] = [
        Ablation::Attention,
        Ablation::Shapley,
        Ablation::MonteCarlo,
        Ablation::Causal,
        Ablation::EqualWeights,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Attention => "- Attention",
            Ablation::Shapley => "- Shapley (use regression)",
            Ablation::MonteCarlo => "- Monte Carlo UQ",
            Ablation::Causal => "- Causal DAG",
            Ablation::EqualWeights => "Baseline (equal weights)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: String,
    pub mae: f64,
    /// Entity with the largest positive discrepancy and its value in percent.
    pub max_discrepancy: Option<(String, f64)>,
    pub has_intervals: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn ablation_row(
    configuration: &str,
    report: &DiscrepancyReport,
    has_intervals: bool,
    note: Option<&str>,
) -> AblationRow {
    AblationRow {
        configuration: configuration.to_string(),
        mae: report.mae,
        max_discrepancy: report.max_positive().map(|r| (r.entity.clone(), r.discrepancy_pct)),
        has_intervals,
        note: note.map(str::to_string),
    }
}

/// The full model followed by each selected ablation, in report order.
pub fn run_ablation(scenario: &Scenario, selected: &[Ablation], mc: &MCConfig) -> Result<Vec<AblationRow>> {
    if selected.is_empty() {
        return Err(Error::validation("ablations", "select at least one configuration"));
    }
    let weights = scenario_weights(scenario)?;
    let historical = historical_shares(scenario)?;
    let full = allocate(scenario, weights, Some(mc))?;
    let mut rows = vec![ablation_row("Full Model", &full.report, true, None)];
    for ablation in Ablation::ALL.into_iter().filter(|a| selected.contains(a)) {
        let row = match ablation {
            Ablation::Attention => ablation_row(
                ablation.label(),
                &full.report,
                true,
                Some("attention is diagnostic only; shares are unchanged"),
            ),
            Ablation::Causal => ablation_row(
                ablation.label(),
                &full.report,
                true,
                Some("causal graphs answer counterfactuals only; shares are unchanged"),
            ),
            Ablation::MonteCarlo => {
                let point = allocate(scenario, weights, None)?;
                ablation_row(ablation.label(), &point.report, false, None)
            }
            Ablation::Shapley => {
                let report = discrepancy_report(&regression_shares(scenario)?, historical)?;
                ablation_row(
                    ablation.label(),
                    &report,
                    false,
                    Some("leave-one-out Bayesian linear regression"),
                )
            }
            Ablation::EqualWeights => {
                let features = scenario.feature_names();
                let equal = features
                    .iter()
                    .map(|f| (f.clone(), 1.0 / features.len() as f64))
                    .collect();
                let baseline = allocate(scenario, &equal, Some(mc))?;
                ablation_row(ablation.label(), &baseline.report, true, None)
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualAnswer {
    pub entity: String,
    pub graph: String,
    pub space: ValueSpace,
    /// Interventions converted into the graph's space.
    pub interventions: BTreeMap<String, f64>,
    pub factual: NodeValues,
    pub counterfactual: NodeValues,
    /// Answers under every graph of the scenario, with per-node spread.
    pub per_graph: BTreeMap<String, NodeValues>,
    pub spread: BTreeMap<String, (f64, f64)>,
}

fn observation(scenario: &Scenario, entity: &str, space: ValueSpace) -> Result<BTreeMap<String, f64>> {
    let e = scenario
        .entity(entity)
        .ok_or_else(|| Error::validation("entity", format!("unknown entity `{entity}`")))?;
    e.features
        .iter()
        .map(|(f, v)| {
            let value = match (space, scenario.transforms.get(f)) {
                (ValueSpace::Transformed, Some(kind)) => apply_transform(*kind, v.mean).map_err(|err| match err {
                    Error::Domain { message, .. } => Error::Domain {
                        feature: f.clone(),
                        message,
                    },
                    other => other,
                })?,
                _ => v.mean,
            };
            Ok((f.clone(), value))
        })
        .collect()
}

fn to_space(scenario: &Scenario, space: ValueSpace, raw: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    raw.iter()
        .map(|(node, &v)| match (space, scenario.transforms.get(node)) {
            (ValueSpace::Transformed, Some(kind)) => Ok((node.clone(), apply_transform(*kind, v)?)),
            _ => Ok((node.clone(), v)),
        })
        .collect()
}

/// Answers "what if `entity` had these raw values" under the chosen graph (the
/// first one by default). The entity's measured means are the observation;
/// graph nodes it does not measure are completed with zero noise.
pub fn counterfactual(
    scenario: &Scenario,
    entity: &str,
    interventions: &BTreeMap<String, f64>,
    graph: Option<&str>,
) -> Result<CounterfactualAnswer> {
    let spec = match graph {
        Some(label) => scenario
            .causal
            .iter()
            .find(|g| g.label == label)
            .ok_or_else(|| Error::validation("graph", format!("unknown graph `{label}`")))?,
        None => scenario
            .causal
            .first()
            .ok_or_else(|| Error::validation("causal", "scenario defines no causal graph"))?,
    };
    let graphs: Vec<(String, CausalGraph)> = scenario
        .causal
        .iter()
        .filter(|g| g.space == spec.space)
        .map(|g| Ok((g.label.clone(), g.build()?)))
        .collect::<Result<_>>()?;
    let chosen = &graphs
        .iter()
        .find(|(l, _)| *l == spec.label)
        .expect("chosen graph is listed")
        .1;
    let measured = observation(scenario, entity, spec.space)?;
    let observed: BTreeMap<String, f64> = measured
        .into_iter()
        .filter(|(node, _)| chosen.nodes().contains(node))
        .collect();
    let factual = chosen.fill_unobserved(&observed)?;
    let interventions = to_space(scenario, spec.space, interventions)?;
    let query = CounterfactualQuery {
        observed: factual.clone(),
        interventions: interventions.clone(),
    };
    let counterfactual = chosen.counterfactual(&query)?;
    let sensitivity = sensitivity_over_dags(&graphs, &query)?;
    Ok(CounterfactualAnswer {
        entity: entity.to_string(),
        graph: spec.label.clone(),
        space: spec.space,
        interventions,
        factual,
        counterfactual,
        per_graph: sensitivity.per_graph,
        spread: sensitivity.spread,
    })
}

//! One function per subcommand; each returns a filled `RunReport`.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clio_core::allocation::DiscrepancyReport;
use clio_core::conflict::{
    battle_simulate, commander_compare, commander_effectiveness, scenario_blend, support_score, BattleOutcome,
    BattleSpec, ConflictSetup,
};
use clio_core::inference::ForestConfig;
use clio_core::pipeline::{self, Ablation, AblationRow, AllocationOutcome, CounterfactualAnswer};
use clio_core::uncertainty::MCConfig;
use clio_core::{load_scenario, load_shipped, Scenario};
use serde_json::json;

use crate::report::{fixed, opt, raw, signed_pct, RunReport, Table};

/// A path to a scenario file, or the name of a bundled scenario.
pub fn open_scenario(source: &str) -> clio_core::Result<Scenario> {
    let path = Path::new(source);
    if path.exists() || !clio_core::scenario::shipped_names().contains(&source) {
        load_scenario(path)
    } else {
        load_shipped(source)
    }
}

pub fn mc_echo(config: &MCConfig) -> serde_json::Value {
    json!({"sims": config.simulation_count, "seed": config.seed, "confidence": config.confidence})
}

fn allocation_table(report: &DiscrepancyReport, outcome: &AllocationOutcome) -> Table {
    let mut t = Table::new(
        "allocation",
        &[
            "entity",
            "projected_share_pct",
            "historical_share_pct",
            "discrepancy_pct",
            "ci_low",
            "ci_high",
            "mean",
            "std",
            "projected_share_pct_raw",
            "historical_share_pct_raw",
            "discrepancy_pct_raw",
            "ci_low_raw",
            "ci_high_raw",
            "mean_raw",
            "std_raw",
        ],
    );
    for row in &report.rows {
        let summary = outcome.uncertainty.as_ref().and_then(|u| u.get(&row.entity));
        let (lo, hi) = (row.interval.map(|i| i.0), row.interval.map(|i| i.1));
        let (mean, std) = (summary.map(|s| s.mean), summary.map(|s| s.std));
        t.push(vec![
            row.entity.clone(),
            fixed(row.projected, 1),
            fixed(row.historical, 1),
            signed_pct(row.discrepancy_pct),
            opt(lo, |x| fixed(x, 1)),
            opt(hi, |x| fixed(x, 1)),
            opt(mean, |x| fixed(x, 1)),
            opt(std, |x| fixed(x, 2)),
            raw(row.projected),
            raw(row.historical),
            raw(row.discrepancy_pct),
            opt(lo, raw),
            opt(hi, raw),
            opt(mean, raw),
            opt(std, raw),
        ]);
    }
    t
}

/// Long format: one row per (entity, series) for plotting shares with intervals.
pub fn allocation_long_table(outcome: &AllocationOutcome) -> Table {
    let mut t = Table::new(
        "allocation_long",
        &["entity", "series", "share_pct", "ci_low", "ci_high"],
    );
    for row in &outcome.report.rows {
        let (lo, hi) = (row.interval.map(|i| i.0), row.interval.map(|i| i.1));
        t.push(vec![
            row.entity.clone(),
            "projected".into(),
            raw(row.projected),
            opt(lo, raw),
            opt(hi, raw),
        ]);
        t.push(vec![
            row.entity.clone(),
            "historical".into(),
            raw(row.historical),
            String::new(),
            String::new(),
        ]);
    }
    t
}

fn check_allocation(outcome: &AllocationOutcome, report: &mut RunReport) {
    let total: f64 = outcome.shapley.shares.values().sum();
    if (total - 100.0).abs() > 1e-9 {
        report
            .violations
            .push(format!("projected shares sum to {total}, not 100"));
    }
    for row in &outcome.report.rows {
        if let Some((lo, hi)) = row.interval {
            if lo > hi {
                report
                    .violations
                    .push(format!("{}: interval [{lo}, {hi}] is inverted", row.entity));
            }
        }
    }
}

pub fn allocate(scenario: &Scenario, source: &str, mc: Option<&MCConfig>) -> Result<(RunReport, AllocationOutcome)> {
    let weights = pipeline::scenario_weights(scenario)?;
    let outcome = pipeline::allocate(scenario, weights, mc)?;
    let config = mc.map(mc_echo).unwrap_or(json!({"monte_carlo": false}));
    let mut report = RunReport::new("allocate", source, config);
    report.tables.push(allocation_table(&outcome.report, &outcome));
    report.summary.push(("mae_pp".into(), fixed(outcome.report.mae, 2)));
    report.summary.push(("mae_pp_raw".into(), raw(outcome.report.mae)));
    if let Some(t) = outcome.tension {
        report.summary.push(("tension_factor".into(), fixed(t, 2)));
        report.summary.push(("tension_factor_raw".into(), raw(t)));
    }
    if let Some(p) = outcome.conflict_probability {
        report
            .summary
            .push(("conflict_probability_pct".into(), fixed(100.0 * p, 1)));
        report.summary.push(("conflict_probability_raw".into(), raw(p)));
    }
    if scenario.allocation.is_none() {
        report
            .warnings
            .push("scenario has no allocation constants; tension and conflict probability skipped".into());
    }
    check_allocation(&outcome, &mut report);
    Ok((report, outcome))
}

pub fn weights(scenario: &Scenario, source: &str, forest: &ForestConfig) -> Result<RunReport> {
    let learned = pipeline::learn_weights(scenario, forest)?;
    let mut report = RunReport::new(
        "weights",
        source,
        json!({"trees": forest.tree_count, "seed": forest.seed, "max_features": forest.max_features}),
    );
    let mut t = Table::new(
        "weights",
        &[
            "feature",
            "importance",
            "calibrated_weight",
            "shipped_weight",
            "importance_raw",
            "calibrated_weight_raw",
        ],
    );
    for (feature, importance) in &learned.importances.importances {
        let calibrated = learned.calibration.weights[feature];
        let shipped = scenario.weights.as_ref().and_then(|w| w.get(feature)).copied();
        t.push(vec![
            feature.clone(),
            fixed(*importance, 4),
            fixed(calibrated, 4),
            opt(shipped, |x| fixed(x, 4)),
            raw(*importance),
            raw(calibrated),
        ]);
    }
    report.tables.push(t);
    report
        .summary
        .push(("objective".into(), raw(learned.calibration.objective)));
    report
        .summary
        .push(("iterations".into(), learned.calibration.iterations.to_string()));
    report.summary.push(("mae_pp".into(), fixed(learned.mae, 2)));
    if learned.importances.degenerate {
        report.warnings.push("constant target: importances are uniform".into());
    }
    Ok(report)
}

fn setup(scenario: &Scenario) -> Result<&ConflictSetup> {
    scenario.conflict.as_ref().ok_or_else(|| {
        clio_core::Error::Validation {
            path: "conflict".into(),
            message: "scenario has no conflict section".into(),
        }
        .into()
    })
}

/// Picks battles: by name, by attacker/defender pair, or all shipped ones.
pub fn select_battles(
    scenario: &Scenario,
    name: Option<&str>,
    attacker: Option<&str>,
    defender: Option<&str>,
) -> Result<Vec<BattleSpec>> {
    let setup = setup(scenario)?;
    if let Some(name) = name {
        let battle = setup.battle(name).with_context(|| format!("unknown battle `{name}`"))?;
        return Ok(vec![battle.clone()]);
    }
    match (attacker, defender) {
        (None, None) => {
            if setup.battles.is_empty() {
                bail!("scenario lists no battles; pass --attacker and --defender");
            }
            Ok(setup.battles.clone())
        }
        (Some(a), Some(d)) => {
            if let Some(b) = setup.battles.iter().find(|b| b.attacker == a && b.defender == d) {
                return Ok(vec![b.clone()]);
            }
            let commander_of = |faction: &str| {
                setup
                    .commanders
                    .iter()
                    .find(|c| c.faction.as_deref() == Some(faction))
                    .map(|c| c.name.clone())
                    .with_context(|| format!("no commander belongs to `{faction}`"))
            };
            Ok(vec![BattleSpec {
                name: format!("{a} vs {d}"),
                attacker: a.to_string(),
                defender: d.to_string(),
                attacker_commander: commander_of(a)?,
                defender_commander: commander_of(d)?,
                gamma: 0.3,
            }])
        }
        _ => bail!("--attacker and --defender must be given together"),
    }
}

pub fn battles_table(outcomes: &[BattleOutcome]) -> Table {
    let mut t = Table::new(
        "battles",
        &[
            "battle",
            "attacker",
            "defender",
            "win_probability_pct",
            "deterministic_pct",
            "power_ratio",
            "mean",
            "std",
            "ci_low",
            "ci_high",
            "win_probability_pct_raw",
            "deterministic_pct_raw",
            "power_ratio_raw",
            "std_raw",
            "ci_low_raw",
            "ci_high_raw",
        ],
    );
    for o in outcomes {
        let s = &o.simulated;
        t.push(vec![
            o.battle.clone(),
            String::new(),
            String::new(),
            fixed(100.0 * s.mean, 1),
            fixed(100.0 * o.deterministic, 1),
            fixed(o.power_ratio(), 2),
            fixed(100.0 * s.mean, 1),
            fixed(100.0 * s.std, 1),
            fixed(100.0 * s.lower, 1),
            fixed(100.0 * s.upper, 1),
            raw(100.0 * s.mean),
            raw(100.0 * o.deterministic),
            raw(o.power_ratio()),
            raw(100.0 * s.std),
            raw(100.0 * s.lower),
            raw(100.0 * s.upper),
        ]);
    }
    t
}

pub fn battle(
    scenario: &Scenario,
    source: &str,
    battles: &[BattleSpec],
    gamma: Option<f64>,
    mc: &MCConfig,
) -> Result<(RunReport, Vec<BattleOutcome>)> {
    let mut config = mc_echo(mc);
    config["gamma"] = json!(gamma);
    let mut report = RunReport::new("battle", source, config);
    let mut outcomes = Vec::new();
    for b in battles {
        let mut spec = b.clone();
        if let Some(g) = gamma {
            spec.gamma = g;
        }
        outcomes.push(battle_simulate(&spec, scenario, mc)?);
    }
    let mut table = battles_table(&outcomes);
    for (row, b) in table.rows.iter_mut().zip(battles) {
        row[1] = b.attacker.clone();
        row[2] = b.defender.clone();
    }
    report.tables.push(table);
    Ok((report, outcomes))
}

pub fn blend(
    scenario: &Scenario,
    source: &str,
    battle: &BattleSpec,
    resource: f64,
    commander: f64,
    mc: &MCConfig,
) -> Result<RunReport> {
    let outcome = scenario_blend(resource, commander, scenario, battle, mc)?;
    let mut config = mc_echo(mc);
    config["resource_weight"] = json!(resource);
    config["commander_weight"] = json!(commander);
    config["battle"] = json!(battle.name);
    let mut report = RunReport::new("blend", source, config);
    let mut t = Table::new(
        "blend",
        &[
            "battle",
            "attacker",
            "resource_weight",
            "commander_weight",
            "win_probability_pct",
            "deterministic_pct",
            "std",
            "ci_low",
            "ci_high",
            "win_probability_pct_raw",
            "deterministic_pct_raw",
        ],
    );
    let s = &outcome.simulated;
    t.push(vec![
        battle.name.clone(),
        battle.attacker.clone(),
        fixed(resource, 2),
        fixed(commander, 2),
        fixed(100.0 * s.mean, 1),
        fixed(100.0 * outcome.deterministic, 1),
        fixed(100.0 * s.std, 1),
        fixed(100.0 * s.lower, 1),
        fixed(100.0 * s.upper, 1),
        raw(100.0 * s.mean),
        raw(100.0 * outcome.deterministic),
    ]);
    report.tables.push(t);
    Ok(report)
}

pub fn commanders_tables(scenario: &Scenario) -> Result<Vec<Table>> {
    let setup = setup(scenario)?;
    let mut t = Table::new(
        "commanders",
        &[
            "commander",
            "faction",
            "effectiveness",
            "support_score",
            "effectiveness_raw",
            "support_score_raw",
        ],
    );
    for c in &setup.commanders {
        let e = commander_effectiveness(c, &setup.trait_weights)?;
        let s = support_score(c, &setup.support_weights);
        t.push(vec![
            c.name.clone(),
            c.faction.clone().unwrap_or_default(),
            fixed(e, 2),
            fixed(s, 2),
            raw(e),
            raw(s),
        ]);
    }
    let mut tables = vec![t];
    if !setup.comparisons.is_empty() {
        let mut cmp = Table::new(
            "comparisons",
            &[
                "metric",
                "first",
                "second",
                "first_value",
                "second_value",
                "delta_pct",
                "delta_pct_raw",
            ],
        );
        for spec in &setup.comparisons {
            let a = setup.commander(&spec.first).expect("validated");
            let b = setup.commander(&spec.second).expect("validated");
            let c = commander_compare(a, b, &setup.trait_weights, &setup.support_weights)?;
            let support_delta = 100.0 * (c.support.1 - c.support.0) / c.support.0;
            cmp.push(vec![
                "commander_effectiveness".into(),
                c.first.clone(),
                c.second.clone(),
                fixed(c.effectiveness.0, 2),
                fixed(c.effectiveness.1, 2),
                signed_pct(c.delta_pct),
                raw(c.delta_pct),
            ]);
            cmp.push(vec![
                "support_score".into(),
                c.first.clone(),
                c.second.clone(),
                fixed(c.support.0, 2),
                fixed(c.support.1, 2),
                signed_pct(support_delta),
                raw(support_delta),
            ]);
        }
        tables.push(cmp);
    }
    Ok(tables)
}

pub fn commanders(scenario: &Scenario, source: &str) -> Result<RunReport> {
    let mut report = RunReport::new("commanders", source, json!({}));
    report.tables = commanders_tables(scenario)?;
    Ok(report)
}

pub fn counterfactual_table(answers: &[CounterfactualAnswer]) -> Table {
    let mut t = Table::new(
        "counterfactual",
        &[
            "entity",
            "graph",
            "node",
            "factual",
            "counterfactual",
            "change",
            "spread_min",
            "spread_max",
        ],
    );
    for a in answers {
        for (node, factual) in &a.factual {
            let cf = a.counterfactual[node];
            let (lo, hi) = a.spread.get(node).copied().unwrap_or((cf, cf));
            t.push(vec![
                a.entity.clone(),
                a.graph.clone(),
                node.clone(),
                raw(*factual),
                raw(cf),
                raw(cf - factual),
                raw(lo),
                raw(hi),
            ]);
        }
    }
    t
}

/// Runs the given query, or every example shipped with the scenario.
pub fn counterfactual_answers(
    scenario: &Scenario,
    entity: Option<&str>,
    interventions: &BTreeMap<String, f64>,
    graph: Option<&str>,
) -> Result<Vec<CounterfactualAnswer>> {
    match entity {
        Some(e) => {
            if interventions.is_empty() {
                bail!("--entity needs at least one --do node=value");
            }
            Ok(vec![pipeline::counterfactual(scenario, e, interventions, graph)?])
        }
        None => {
            if !interventions.is_empty() {
                bail!("--do needs --entity");
            }
            if scenario.counterfactuals.is_empty() {
                bail!("scenario ships no counterfactual examples; pass --entity and --do");
            }
            scenario
                .counterfactuals
                .iter()
                .map(|ex| {
                    Ok(pipeline::counterfactual(
                        scenario,
                        &ex.entity,
                        &ex.interventions,
                        Some(graph.unwrap_or(&ex.graph)),
                    )?)
                })
                .collect()
        }
    }
}

pub fn counterfactual(
    scenario: &Scenario,
    source: &str,
    entity: Option<&str>,
    interventions: &BTreeMap<String, f64>,
    graph: Option<&str>,
) -> Result<RunReport> {
    let answers = counterfactual_answers(scenario, entity, interventions, graph)?;
    let mut report = RunReport::new(
        "counterfactual",
        source,
        json!({"entity": entity, "do": interventions, "graph": graph}),
    );
    report.tables.push(counterfactual_table(&answers));
    Ok(report)
}

pub fn ablation_table(rows: &[AblationRow]) -> Table {
    let mut t = Table::new(
        "ablation",
        &[
            "configuration",
            "mae_pp",
            "max_discrepancy_entity",
            "max_discrepancy_pct",
            "ci",
            "mae_pp_raw",
            "max_discrepancy_pct_raw",
            "note",
        ],
    );
    for r in rows {
        let (entity, pct) = match &r.max_discrepancy {
            Some((e, p)) => (e.clone(), Some(*p)),
            None => (String::new(), None),
        };
        t.push(vec![
            r.configuration.clone(),
            fixed(r.mae, 1),
            entity,
            opt(pct, signed_pct),
            if r.has_intervals { "yes" } else { "no" }.into(),
            raw(r.mae),
            opt(pct, raw),
            r.note.clone().unwrap_or_default(),
        ]);
    }
    t
}

pub fn ablate(
    scenario: &Scenario,
    source: &str,
    selected: &[Ablation],
    mc: &MCConfig,
) -> Result<(RunReport, Vec<AblationRow>)> {
    let rows = pipeline::run_ablation(scenario, selected, mc)?;
    let mut config = mc_echo(mc);
    config["ablations"] = json!(selected);
    let mut report = RunReport::new("ablate", source, config);
    report.tables.push(ablation_table(&rows));
    Ok((report, rows))
}

/// Writes every applicable analysis into `dir` plus `summary.json`.
pub fn bundle(scenario: &Scenario, source: &str, dir: &Path, mc: &MCConfig) -> Result<RunReport> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut report = RunReport::new("bundle", source, mc_echo(mc));
    let mut summary = serde_json::Map::new();
    summary.insert("scenario".into(), json!(scenario.label));
    summary.insert("config".into(), mc_echo(mc));
    let mut written = Vec::new();
    let mut write = |table: &Table, file: &str| -> Result<()> {
        table.write_csv(&dir.join(file))?;
        written.push(file.to_string());
        Ok(())
    };

    if scenario.historical_shares.is_some() && scenario.weights.is_some() {
        let (alloc, outcome) = allocate(scenario, source, Some(mc))?;
        write(&alloc.tables[0], "allocate.csv")?;
        write(&allocation_long_table(&outcome), "allocate_long.csv")?;
        report.violations.extend(alloc.violations);
        summary.insert(
            "allocate".into(),
            json!({
                "mae_pp": outcome.report.mae,
                "tension_factor": outcome.tension,
                "conflict_probability": outcome.conflict_probability,
                "weights": outcome.weights,
                "shares": outcome.shapley.shares,
                "shapley_values": outcome.shapley.values,
                "intervals": outcome.uncertainty,
            }),
        );
        let (_, rows) = ablate(scenario, source, &Ablation::ALL, mc)?;
        write(&ablation_table(&rows), "ablation.csv")?;
        summary.insert("ablation".into(), json!(rows));
        if let Some(heads) = pipeline::attention_diagnostic(scenario)? {
            let heads: Vec<Vec<Vec<f64>>> = heads
                .iter()
                .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect();
            summary.insert(
                "attention".into(),
                json!({"entities": scenario.entity_names(), "heads": heads}),
            );
        }
    }
    if !scenario.counterfactuals.is_empty() {
        let answers = counterfactual_answers(scenario, None, &BTreeMap::new(), None)?;
        write(&counterfactual_table(&answers), "counterfactual.csv")?;
        summary.insert("counterfactuals".into(), json!(answers));
    }
    if let Some(setup) = &scenario.conflict {
        if !setup.battles.is_empty() {
            let (battles, outcomes) = battle(scenario, source, &setup.battles, None, mc)?;
            write(&battles.tables[0], "battles.csv")?;
            summary.insert("battles".into(), json!(outcomes));
        }
        let tables = commanders_tables(scenario)?;
        for table in &tables {
            write(table, &format!("{}.csv", table.name))?;
        }
    }
    summary.insert("files".into(), json!(written));
    summary.insert("metadata".into(), json!(scenario.metadata));
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(summary))? + "\n";
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    let mut files = Table::new("files", &["file"]);
    for f in written.iter().map(String::as_str).chain(["summary.json"]) {
        files.push(vec![dir.join(f).display().to_string()]);
    }
    report.tables.push(files);
    Ok(report)
}

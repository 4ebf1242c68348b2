use std::collections::BTreeMap;

use clio_core::causal::{sensitivity_over_dags, CounterfactualQuery};
use clio_core::pipeline;
use clio_core::rng::stream;
use clio_core::transforms::apply_transform;
use clio_core::{load_shipped, Error};
use clio_validation::*;
use rand::Rng;

#[test]
fn composition_of_disjoint_interventions() {
    let mut rng = stream(41);
    for _ in 0..100 {
        let n = rng.random_range(2..=10usize);
        let dag = random_dag(n, &mut rng);
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = rng.random_range(0..n);
        let b = (a + 1 + rng.random_range(0..n - 1)) % n;
        let (va, vb) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let both = BTreeMap::from([(dag.nodes[a].clone(), va), (dag.nodes[b].clone(), vb)]);
        let joint = dag.graph.intervene(&both, &dag.noise_map(&noise)).unwrap();
        let expected = dag.oracle_world(&noise, &BTreeMap::from([(a, va), (b, vb)]));
        for (i, name) in dag.nodes.iter().enumerate() {
            assert!((joint[name] - expected[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn intervening_at_the_observed_value_changes_nothing() {
    let mut rng = stream(42);
    for _ in 0..100 {
        let n = rng.random_range(1..=10usize);
        let dag = random_dag(n, &mut rng);
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let world = dag.oracle_world(&noise, &BTreeMap::new());
        let observed = dag.value_map(&world);
        let k = rng.random_range(0..n);
        let query = CounterfactualQuery {
            observed: observed.clone(),
            interventions: BTreeMap::from([(dag.nodes[k].clone(), world[k])]),
        };
        let answer = dag.graph.counterfactual(&query).unwrap();
        for (name, v) in &observed {
            assert!((answer[name] - v).abs() < 1e-9);
        }
    }
}

#[test]
fn partial_observation_names_missing_noise() {
    let dag = random_dag(4, &mut stream(43));
    let mut observed = dag.value_map(&dag.oracle_world(&[0.1, 0.2, 0.3, 0.4], &BTreeMap::new()));
    observed.remove("x3");
    let err = dag
        .graph
        .counterfactual(&CounterfactualQuery {
            observed,
            interventions: BTreeMap::new(),
        })
        .unwrap_err();
    match err {
        Error::Underdetermined(missing) => assert!(missing.contains(&"U_x3".to_string())),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn germany_with_british_tonnage_raises_power_linearly() {
    let scenario = load_shipped("colonial_1890").unwrap();
    let answer = pipeline::counterfactual(
        &scenario,
        "Germany",
        &BTreeMap::from([("naval".to_string(), 980.0)]),
        Some("illustrative"),
    )
    .unwrap();
    let kind = scenario.transforms["naval"];
    let germany = scenario.entity("Germany").unwrap().features["naval"].mean;
    let delta = apply_transform(kind, 980.0).unwrap() - apply_transform(kind, germany).unwrap();
    let w = scenario.weights.as_ref().unwrap()["naval"];
    let rise = answer.counterfactual["power_index"] - answer.factual["power_index"];
    assert!((rise - w * delta).abs() < 1e-12, "{rise} vs {}", w * delta);
    for node in ["coal", "gdp", "industrial", "population", "tech", "infrastructure"] {
        assert_eq!(answer.counterfactual[node], answer.factual[node]);
    }
}

#[test]
fn shipped_graphs_differ_by_a_tenth_of_industrial() {
    let scenario = load_shipped("colonial_1890").unwrap();
    let graphs: Vec<_> = scenario
        .causal
        .iter()
        .map(|g| (g.label.clone(), g.build().unwrap()))
        .collect();
    assert_eq!(graphs.len(), 2);
    let answer = pipeline::counterfactual(
        &scenario,
        "Germany",
        &BTreeMap::from([("industrial".to_string(), 100.0)]),
        Some("illustrative"),
    )
    .unwrap();
    let query = CounterfactualQuery {
        observed: answer.factual.clone(),
        interventions: BTreeMap::from([("industrial".to_string(), answer.counterfactual["industrial"])]),
    };
    let report = sensitivity_over_dags(&graphs, &query).unwrap();
    let a = &report.per_graph["illustrative"];
    let b = &report.per_graph["naval_sensitivity"];
    let d_industrial = answer.counterfactual["industrial"] - answer.factual["industrial"];
    assert!(((b["naval"] - a["naval"]) - 0.1 * d_industrial).abs() < 1e-12);
    let (lo, hi) = report.spread["naval"];
    assert!((hi - lo - 0.1 * d_industrial.abs()).abs() < 1e-12);
    assert_eq!(answer.spread["naval"], (lo, hi));
}

//! Independent reference implementations used to check clio-core, plus the
//! reporting helper of the acceptance run.

use std::collections::BTreeMap;

use clio_core::allocation::CoalitionGame;
use clio_core::causal::{CausalGraph, StructuralEquation};
use rand::Rng;

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

/// Random coalition table with `v(empty) = 0`.
pub fn random_table<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..1usize << n)
        .map(|m| if m == 0 { 0.0 } else { rng.random_range(-5.0..10.0) })
        .collect()
}

pub fn game(table: Vec<f64>) -> CoalitionGame {
    let n = table.len().trailing_zeros() as usize;
    CoalitionGame::tabulated(names(n), table).unwrap()
}

/// Heap's algorithm over every ordering of `0..n`.
pub fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&order);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Shapley values as the average marginal contribution over all `n!`
/// orderings, plus the per-player variance of that contribution.
pub fn permutation_oracle(table: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = table.len().trailing_zeros() as usize;
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut count = 0usize;
    for_each_permutation(n, |order| {
        let mut mask = 0usize;
        for &p in order {
            let delta = table[mask | 1 << p] - table[mask];
            sum[p] += delta;
            sum_sq[p] += delta * delta;
            mask |= 1 << p;
        }
        count += 1;
    });
    let k = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / k).collect();
    let var = sum_sq.iter().zip(&mean).map(|(s, m)| s / k - m * m).collect();
    (mean, var)
}

pub fn scale(table: &[f64]) -> f64 {
    table.iter().fold(1.0_f64, |a, v| a.max(v.abs()))
}

/// Random linear DAG over `n` nodes: edges only from lower to higher index,
/// node order shuffled so declaration order is not topological.
pub struct RandomDag {
    pub graph: CausalGraph,
    pub nodes: Vec<String>,
    /// parents[i] = (parent, coefficient)
    pub parents: Vec<Vec<(usize, f64)>>,
    pub offsets: Vec<f64>,
}

pub fn random_dag<R: Rng>(n: usize, rng: &mut R) -> RandomDag {
    let nodes: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let mut parents = vec![Vec::new(); n];
    let mut offsets = vec![0.0; n];
    let mut equations = BTreeMap::new();
    for child in 0..n {
        offsets[child] = rng.random_range(-1.0..1.0);
        for parent in 0..child {
            if rng.random_bool(0.4) {
                parents[child].push((parent, rng.random_range(-2.0..2.0)));
            }
        }
        let coefficients = parents[child].iter().map(|&(p, c)| (nodes[p].clone(), c)).collect();
        equations.insert(
            nodes[child].clone(),
            StructuralEquation {
                offset: offsets[child],
                coefficients,
            },
        );
    }
    let mut declared = nodes.clone();
    for i in (1..n).rev() {
        declared.swap(i, rng.random_range(0..=i));
    }
    let graph = CausalGraph::new(declared, equations).unwrap();
    RandomDag {
        graph,
        nodes,
        parents,
        offsets,
    }
}

impl RandomDag {
    /// Hand evaluation in index order (which is topological by construction).
    pub fn oracle_world(&self, noise: &[f64], fixed: &BTreeMap<usize, f64>) -> Vec<f64> {
        let mut values = vec![0.0; self.nodes.len()];
        for i in 0..self.nodes.len() {
            values[i] = match fixed.get(&i) {
                Some(&v) => v,
                None => self.offsets[i] + self.parents[i].iter().map(|&(p, c)| c * values[p]).sum::<f64>() + noise[i],
            };
        }
        values
    }

    pub fn noise_map(&self, noise: &[f64]) -> BTreeMap<String, f64> {
        self.nodes
            .iter()
            .zip(noise)
            .map(|(n, u)| (format!("U_{n}"), *u))
            .collect()
    }

    pub fn value_map(&self, values: &[f64]) -> BTreeMap<String, f64> {
        self.nodes.iter().cloned().zip(values.iter().copied()).collect()
    }

    pub fn descends_from_any(&self, node: usize, roots: &[usize]) -> bool {
        roots.contains(&node)
            || self.parents[node]
                .iter()
                .any(|&(p, _)| self.descends_from_any(p, roots))
    }
}

/// Prints one acceptance line; true on PASS.
pub fn verdict(criterion: u32, title: &str, checks: &[(String, bool)]) -> bool {
    let ok = checks.iter().all(|(_, pass)| *pass);
    let details: Vec<String> = checks
        .iter()
        .map(|(d, pass)| if *pass { d.clone() } else { format!("FAILED {d}") })
        .collect();
    println!(
        "{} criterion {criterion}: {title} | {}",
        if ok { "PASS" } else { "FAIL" },
        details.join("; ")
    );
    ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heap_visits_every_ordering_once() {
        let mut seen = std::collections::BTreeSet::new();
        for_each_permutation(5, |o| {
            seen.insert(o.to_vec());
        });
        assert_eq!(seen.len(), 120);
    }

    #[test]
    fn oracle_on_a_two_glove_game() {
        // v = 1 when players 0 and 1 are both present; player 2 is null
        let table: Vec<f64> = (0..8).map(|m| if m & 0b011 == 0b011 { 1.0 } else { 0.0 }).collect();
        let (phi, var) = permutation_oracle(&table);
        assert_eq!(phi, vec![0.5, 0.5, 0.0]);
        assert_eq!(var, vec![0.25, 0.25, 0.0]);
    }

    #[test]
    fn random_dag_worlds_follow_their_equations() {
        let mut rng = clio_core::rng::stream(3);
        let dag = random_dag(6, &mut rng);
        let noise = [0.5, -1.0, 2.0, 0.0, 1.5, -0.5];
        let world = dag.oracle_world(&noise, &BTreeMap::new());
        let library = dag.graph.evaluate(&dag.noise_map(&noise)).unwrap();
        for (i, name) in dag.nodes.iter().enumerate() {
            assert!((library[name] - world[i]).abs() < 1e-12);
        }
    }
}

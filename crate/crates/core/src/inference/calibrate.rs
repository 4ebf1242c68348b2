//! Simplex-constrained least-squares calibration of feature weights.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{validate_simplex, Scenario};
use crate::transforms::transform_features;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-10,
            initial_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub weights: BTreeMap<String, f64>,
    /// Sum of squared share errors, in squared percentage points.
    pub objective: f64,
    pub iterations: usize,
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Share-fitting least squares over a fixed design matrix.
struct ShareObjective<'a> {
    /// rows: entities, columns: transformed features
    x: &'a [Vec<f64>],
    target: &'a [f64],
    column_sums: Vec<f64>,
}

impl<'a> ShareObjective<'a> {
    fn new(x: &'a [Vec<f64>], target: &'a [f64]) -> Self {
        let d = x[0].len();
        let column_sums = (0..d).map(|f| x.iter().map(|r| r[f]).sum()).collect();
        Self { x, target, column_sums }
    }

    fn powers(&self, w: &[f64]) -> Vec<f64> {
        self.x
            .iter()
            .map(|r| r.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let p = self.powers(w);
        let total: f64 = p.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return f64::INFINITY;
        }
        p.iter()
            .zip(self.target)
            .map(|(pi, h)| (100.0 * pi / total - h).powi(2))
            .sum()
    }

    /// d/dw_f of sum_i (100 P_i / S - h_i)^2 with S = sum_i P_i.
    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let p = self.powers(w);
        let total: f64 = p.iter().sum();
        let residuals: Vec<f64> = p
            .iter()
            .zip(self.target)
            .map(|(pi, h)| 100.0 * pi / total - h)
            .collect();
        (0..w.len())
            .map(|f| {
                self.x
                    .iter()
                    .zip(&p)
                    .zip(&residuals)
                    .map(|((row, pi), r)| {
                        let ds = 100.0 * (row[f] * total - pi * self.column_sums[f]) / (total * total);
                        2.0 * r * ds
                    })
                    .sum()
            })
            .collect()
    }
}

/// Projected gradient descent on the simplex.
///
/// Step rule: start from the previous accepted step doubled, halve until the
/// projected point satisfies the quadratic sufficient-decrease condition
/// `f(w+) <= f(w) + g.(w+ - w) + |w+ - w|^2 / (2 step)`. Every iterate is a
/// projection, so iterates never leave the simplex.
pub fn minimize_share_error(
    x: &[Vec<f64>],
    target: &[f64],
    initial: &[f64],
    options: &CalibrationOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    if x.is_empty() || x[0].is_empty() {
        return Err(Error::Dimension("empty design matrix".into()));
    }
    if x.len() != target.len() || x.iter().any(|r| r.len() != initial.len()) {
        return Err(Error::Dimension("design matrix, target and weights disagree".into()));
    }
    let objective = ShareObjective::new(x, target);
    let mut w = project_to_simplex(initial);
    let mut f = objective.value(&w);
    if !f.is_finite() {
        return Err(Error::Computation("initial weights give zero total power".into()));
    }
    let mut step = options.initial_step;
    let mut iterations = 0;
    'outer: while iterations < options.max_iterations {
        iterations += 1;
        let g = objective.gradient(&w);
        step *= 2.0;
        let (candidate, fc) = loop {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let candidate = project_to_simplex(&trial);
            let delta: Vec<f64> = candidate.iter().zip(&w).map(|(c, wi)| c - wi).collect();
            let moved: f64 = delta.iter().map(|d| d * d).sum();
            if moved == 0.0 {
                break 'outer;
            }
            let fc = objective.value(&candidate);
            let linear: f64 = g.iter().zip(&delta).map(|(a, b)| a * b).sum();
            if fc <= f + linear + moved / (2.0 * step) {
                break (candidate, fc);
            }
            step *= 0.5;
            if step < 1e-30 {
                break 'outer;
            }
        };
        let improvement = f - fc;
        w = candidate;
        f = fc;
        if improvement < options.tolerance {
            break;
        }
    }
    Ok((w, f, iterations))
}

/// Transformed-feature design matrix (entities by lexical features).
pub fn design_matrix(scenario: &Scenario) -> Result<Vec<Vec<f64>>> {
    scenario
        .entities
        .iter()
        .map(|e| Ok(transform_features(e, &scenario.transforms)?.into_values().collect()))
        .collect()
}

/// Fits weights so that the additive-game shares match `target` shares.
pub fn calibrate_to_target(
    initial: &BTreeMap<String, f64>,
    scenario: &Scenario,
    target: &IndexMap<String, f64>,
    options: &CalibrationOptions,
) -> Result<Calibration> {
    validate_simplex(initial, "initial")?;
    let features = scenario.feature_names();
    let start = features
        .iter()
        .map(|f| {
            initial
                .get(f)
                .copied()
                .ok_or_else(|| Error::validation(format!("initial.{f}"), "missing weight"))
        })
        .collect::<Result<Vec<_>>>()?;
    let goal = scenario
        .entities
        .iter()
        .map(|e| {
            target
                .get(&e.name)
                .copied()
                .ok_or_else(|| Error::validation(format!("target.{}", e.name), "missing share"))
        })
        .collect::<Result<Vec<_>>>()?;
    let x = design_matrix(scenario)?;
    let (w, objective, iterations) = minimize_share_error(&x, &goal, &start, options)?;
    Ok(Calibration {
        weights: features.into_iter().zip(w).collect(),
        objective,
        iterations,
    })
}

/// Calibrates against the scenario's historical shares.
pub fn calibrate_weights(initial: &BTreeMap<String, f64>, scenario: &Scenario) -> Result<Calibration> {
    let historical = scenario
        .historical_shares
        .as_ref()
        .ok_or_else(|| Error::validation("historical_shares", "calibration needs historical shares"))?;
    calibrate_to_target(initial, scenario, historical, &CalibrationOptions::default())
}

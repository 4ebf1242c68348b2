//! Bagged regression trees and mean-decrease-in-impurity importances.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split.
    pub max_features: MaxFeatures,
    pub seed: u64,
}

/// How many features each split may consider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    #[default]
    All,
    /// `ceil(d / 3)`
    Third,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Third => d.div_ceil(3),
            MaxFeatures::Count(k) => k.clamp(1, d),
        }
    }
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            seed: 42,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::validation("tree_count", "must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::validation("min_samples_leaf", "must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::validation("min_samples_split", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    /// Normalized impurity-decrease importances, summing to 1.
    pub importances: BTreeMap<String, f64>,
    /// Set when no tree could split (e.g. constant target); importances are then uniform.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Node::Leaf(v) => *v,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    y: &'a [f64],
    config: &'a ForestConfig,
    max_features: usize,
    importance: Vec<f64>,
    rng: StreamRng,
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    left_len: usize,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, mut idx: Vec<usize>, depth: usize) -> Node {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let depth_exhausted = self.config.max_depth.is_some_and(|m| depth >= m);
        if n < self.config.min_samples_split || depth_exhausted || sse <= 1e-12 * (1.0 + mean * mean) {
            return Node::Leaf(mean);
        }
        let d = self.rows[0].len();
        let candidates = index::sample(&mut self.rng, d, self.max_features);
        let mut best: Option<SplitCandidate> = None;
        for feature in candidates.iter() {
            idx.sort_by(|&a, &b| self.rows[a][feature].total_cmp(&self.rows[b][feature]));
            let (mut left_sum, mut left_sq) = (0.0, 0.0);
            let total_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
            for k in 1..n {
                let yi = self.y[idx[k - 1]];
                left_sum += yi;
                left_sq += yi * yi;
                if k < self.config.min_samples_leaf || n - k < self.config.min_samples_leaf {
                    continue;
                }
                let lo = self.rows[idx[k - 1]][feature];
                let hi = self.rows[idx[k]][feature];
                if lo == hi {
                    continue;
                }
                let right_sum = sum - left_sum;
                let right_sq = total_sq - left_sq;
                let sse_left = (left_sq - left_sum * left_sum / k as f64).max(0.0);
                let sse_right = (right_sq - right_sum * right_sum / (n - k) as f64).max(0.0);
                let gain = sse - sse_left - sse_right;
                if gain > best.as_ref().map_or(1e-12 * sse, |b| b.gain) {
                    best = Some(SplitCandidate {
                        feature,
                        threshold: 0.5 * (lo + hi),
                        left_len: k,
                        gain,
                    });
                }
            }
        }
        let Some(split) = best else {
            return Node::Leaf(mean);
        };
        idx.sort_by(|&a, &b| self.rows[a][split.feature].total_cmp(&self.rows[b][split.feature]));
        let right = idx.split_off(split.left_len);
        self.importance[split.feature] += split.gain;
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(idx, depth + 1)),
            right: Box::new(self.grow(right, depth + 1)),
        }
    }
}

/// A bagged ensemble of variance-reduction regression trees.
///
/// Each tree sees a bootstrap resample of the rows and considers a random
/// subset of `config.max_features` features at every split. Tree `t` draws from
/// substream `(seed, t)`, so training is parallel yet deterministic.
#[derive(Debug, Clone)]
pub struct RegressionForest {
    trees: Vec<Node>,
    /// Per-tree impurity decrease per feature (unnormalized).
    tree_importances: Vec<Vec<f64>>,
    features: usize,
}

impl RegressionForest {
    pub fn fit(x: &DMatrix<f64>, y: &[f64], config: &ForestConfig) -> Result<Self> {
        config.validate()?;
        let (n, d) = x.shape();
        if n < 2 {
            return Err(Error::validation("X", format!("need at least 2 rows, got {n}")));
        }
        if d == 0 {
            return Err(Error::validation("X", "need at least 1 feature"));
        }
        if y.len() != n {
            return Err(Error::Dimension(format!("X has {n} rows, y has {}", y.len())));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::validation("X", "inputs must be finite"));
        }
        let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
        let max_features = config.max_features.resolve(d);
        let (trees, tree_importances) = (0..config.tree_count)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(config.seed, t as u64);
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut builder = TreeBuilder {
                    rows: &rows,
                    y,
                    config,
                    max_features,
                    importance: vec![0.0; d],
                    rng,
                };
                let root = builder.grow(sample, 0);
                (root, builder.importance)
            })
            .unzip();
        Ok(Self {
            trees,
            tree_importances,
            features: d,
        })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean of per-tree normalized importances over trees that split at
    /// least once, renormalized. `None` if no tree split.
    pub fn importances(&self) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.features];
        let mut used = 0;
        for imp in &self.tree_importances {
            let total: f64 = imp.iter().sum();
            if total > 0.0 {
                used += 1;
                for (a, v) in acc.iter_mut().zip(imp) {
                    *a += v / total;
                }
            }
        }
        if used == 0 {
            return None;
        }
        let total: f64 = acc.iter().sum();
        Some(acc.into_iter().map(|a| a / total).collect())
    }
}

/// Impurity-decrease feature importances keyed by feature name.
///
/// Columns are reordered by name before training, so the result depends only
/// on the name-to-column mapping and not on the column order of `x`.
pub fn forest_importance(
    x: &DMatrix<f64>,
    y: &[f64],
    feature_names: &[String],
    config: &ForestConfig,
) -> Result<FeatureImportance> {
    if feature_names.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "{} feature names for {} columns",
            feature_names.len(),
            x.ncols()
        )));
    }
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    order.sort_by(|&a, &b| feature_names[a].cmp(&feature_names[b]));
    if order.windows(2).any(|w| feature_names[w[0]] == feature_names[w[1]]) {
        return Err(Error::validation("feature_names", "names must be unique"));
    }
    let canonical = x.select_columns(&order);
    let forest = RegressionForest::fit(&canonical, y, config)?;
    let (values, degenerate) = match forest.importances() {
        Some(v) => (v, false),
        None => (vec![1.0 / order.len() as f64; order.len()], true),
    };
    let importances = order
        .iter()
        .zip(values)
        .map(|(&col, v)| (feature_names[col].clone(), v))
        .collect();
    Ok(FeatureImportance {
        importances,
        degenerate,
    })
}

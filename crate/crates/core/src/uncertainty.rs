//! Seeded Monte Carlo propagation, percentile summaries and the bootstrap.

use indexmap::IndexMap;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};
use crate::scenario::{sample_features, SampledFeatures, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub simulation_count: usize,
    pub seed: u64,
    /// Central interval coverage in percent.
    pub confidence: f64,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            simulation_count: 1000,
            seed: 42,
            confidence: 95.0,
        }
    }
}

impl MCConfig {
    pub fn new(simulation_count: usize, seed: u64, confidence: f64) -> Result<Self> {
        let config = Self {
            simulation_count,
            seed,
            confidence,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.simulation_count == 0 {
            return Err(Error::validation("sims", "need at least one simulation"));
        }
        check_confidence(self.confidence)
    }

    /// Lower and upper percentiles of the central interval.
    pub fn percentile_pair(&self) -> (f64, f64) {
        percentile_pair(self.confidence)
    }
}

fn check_confidence(confidence: f64) -> Result<()> {
    if confidence > 0.0 && confidence < 100.0 {
        Ok(())
    } else {
        Err(Error::validation(
            "confidence",
            format!("must lie in (0, 100), got {confidence}"),
        ))
    }
}

pub fn percentile_pair(confidence: f64) -> (f64, f64) {
    let tail = (100.0 - confidence) / 2.0;
    (tail, 100.0 - tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl DistributionSummary {
    /// Mean, sample standard deviation and a nearest-rank central interval.
    pub fn from_values(values: &[f64], confidence: f64) -> Result<Self> {
        check_confidence(confidence)?;
        if values.is_empty() {
            return Err(Error::validation("values", "cannot summarize an empty sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Computation("non-finite value in sample".into()));
        }
        let n = values.len();
        // shifting by the first value keeps constant samples exact
        let pivot = values[0];
        let mean = pivot + values.iter().map(|v| v - pivot).sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = percentile_pair(confidence);
        Ok(Self {
            mean,
            std,
            lower: percentile(&sorted, lo),
            upper: percentile(&sorted, hi),
            count: n,
        })
    }
}

/// Nearest-rank percentile of an ascending slice: the smallest element whose
/// rank fraction reaches `p` percent.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Runs `replicate` once per simulation index, each with its own substream,
/// and returns the results in index order.
pub fn mc_run<T, F>(config: &MCConfig, replicate: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> Result<T> + Sync,
{
    config.validate()?;
    (0..config.simulation_count)
        .into_par_iter()
        .map(|index| {
            let mut rng = substream(config.seed, index as u64);
            replicate(index, &mut rng).map_err(|e| Error::Replicate {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Summarizes named replicate outputs; every replicate must report the same names.
pub fn summarize(
    replicates: &[IndexMap<String, f64>],
    confidence: f64,
) -> Result<IndexMap<String, DistributionSummary>> {
    let first = replicates
        .first()
        .ok_or_else(|| Error::validation("sims", "need at least one simulation"))?;
    let mut out = IndexMap::with_capacity(first.len());
    for name in first.keys() {
        let column = replicates
            .iter()
            .enumerate()
            .map(|(index, r)| {
                r.get(name).copied().ok_or_else(|| Error::Replicate {
                    index,
                    source: Box::new(Error::Computation(format!("quantity `{name}` missing"))),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.insert(name.clone(), DistributionSummary::from_values(&column, confidence)?);
    }
    Ok(out)
}

/// Propagates the scenario's measurement uncertainty through `pipeline`.
pub fn mc_propagate<F>(
    scenario: &Scenario,
    pipeline: F,
    config: &MCConfig,
) -> Result<IndexMap<String, DistributionSummary>>
where
    F: Fn(&SampledFeatures) -> Result<IndexMap<String, f64>> + Sync,
{
    let replicates = mc_run(config, |_, rng| pipeline(&sample_features(scenario, rng)))?;
    summarize(&replicates, config.confidence)
}

/// `min(1, sigma^2 / (n epsilon^2))`, the Chebyshev bound on the error of a
/// sample mean.
pub fn chebyshev_bound(std: f64, n: usize, epsilon: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    if n == 0 || epsilon <= 0.0 {
        return 1.0;
    }
    let ratio = std / epsilon;
    (ratio * ratio / n as f64).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Std,
    Percentile(f64),
}

impl Statistic {
    pub fn apply(&self, values: &[f64]) -> f64 {
        let n = values.len() as f64;
        match *self {
            Statistic::Mean => values.iter().sum::<f64>() / n,
            Statistic::Std => {
                if values.len() < 2 {
                    return 0.0;
                }
                let mean = values.iter().sum::<f64>() / n;
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            }
            Statistic::Percentile(p) => {
                let mut sorted = values.to_vec();
                sorted.sort_by(f64::total_cmp);
                percentile(&sorted, p)
            }
        }
    }
}

/// Nonparametric percentile bootstrap of `statistic`.
pub fn bootstrap_summary<R: Rng + ?Sized>(
    values: &[f64],
    resamples: usize,
    statistic: Statistic,
    confidence: f64,
    rng: &mut R,
) -> Result<DistributionSummary> {
    if values.is_empty() {
        return Err(Error::validation("values", "cannot bootstrap an empty sample"));
    }
    if resamples == 0 {
        return Err(Error::validation("resamples", "need at least one resample"));
    }
    let n = values.len();
    let mut scratch = vec![0.0; n];
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in scratch.iter_mut() {
                *slot = values[rng.random_range(0..n)];
            }
            statistic.apply(&scratch)
        })
        .collect();
    DistributionSummary::from_values(&stats, confidence)
}

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRow {
    pub entity: String,
    pub projected: f64,
    pub historical: f64,
    /// `(projected - historical) / historical * 100`
    pub discrepancy_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub rows: Vec<DiscrepancyRow>,
    /// Mean absolute error in percentage points.
    pub mae: f64,
}

impl DiscrepancyReport {
    pub fn row(&self, entity: &str) -> Option<&DiscrepancyRow> {
        self.rows.iter().find(|r| r.entity == entity)
    }

    /// Row with the largest positive discrepancy, if any.
    pub fn max_positive(&self) -> Option<&DiscrepancyRow> {
        self.rows
            .iter()
            .filter(|r| r.discrepancy_pct > 0.0)
            .max_by(|a, b| a.discrepancy_pct.total_cmp(&b.discrepancy_pct))
    }

    pub fn with_intervals(mut self, intervals: &IndexMap<String, (f64, f64)>) -> Self {
        for row in &mut self.rows {
            row.interval = intervals.get(&row.entity).copied();
        }
        self
    }
}

/// Compares projected with historical shares, row order following `projected`.
pub fn discrepancy_report(
    projected: &IndexMap<String, f64>,
    historical: &IndexMap<String, f64>,
) -> Result<DiscrepancyReport> {
    if projected.len() != historical.len() || projected.keys().any(|k| !historical.contains_key(k)) {
        return Err(Error::validation(
            "historical_shares",
            format!(
                "entity sets differ: projected {:?}, historical {:?}",
                projected.keys().collect::<Vec<_>>(),
                historical.keys().collect::<Vec<_>>()
            ),
        ));
    }
    if projected.is_empty() {
        return Err(Error::validation("historical_shares", "no entities to compare"));
    }
    let rows = projected
        .iter()
        .map(|(entity, &p)| {
            let h = historical[entity];
            if h == 0.0 {
                return Err(Error::validation(
                    format!("historical_shares.{entity}"),
                    "relative discrepancy undefined for a zero historical share",
                ));
            }
            Ok(DiscrepancyRow {
                entity: entity.clone(),
                projected: p,
                historical: h,
                discrepancy_pct: (p - h) / h * 100.0,
                interval: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mae = rows.iter().map(|r| (r.projected - r.historical).abs()).sum::<f64>() / rows.len() as f64;
    Ok(DiscrepancyReport { rows, mae })
}

/// `T = kappa * max_i max(0, d_i / 100) * s_i`.
///
/// `kappa` is a calibration constant stored with the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensionParams {
    pub kappa: f64,
}

/// `P = 1 - exp(-T / tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictParams {
    pub tau: f64,
}

pub fn tension_factor(report: &DiscrepancyReport, params: TensionParams) -> f64 {
    let pressure = report
        .rows
        .iter()
        .map(|r| (r.discrepancy_pct / 100.0).max(0.0) * r.projected)
        .fold(0.0, f64::max);
    params.kappa * pressure
}

pub fn conflict_probability(tension: f64, params: ConflictParams) -> f64 {
    1.0 - (-tension.max(0.0) / params.tau).exp()
}

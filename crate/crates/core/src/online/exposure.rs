//! Exposure filtering from reconstructed pairs.
//!
//! A query is exposed when control and treatment would have shown different
//! ordered results for it. `query_level` keeps exposed query rows only (and
//! implies query-level estimands, which assume independent queries);
//! `user_level` keeps every row of a unit with at least one exposed query.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::counterfactual::ReconstructedPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureLevel {
    #[default]
    None,
    QueryLevel,
    UserLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub unit_id: String,
    pub query_id: String,
    pub arm: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSet {
    pub level: ExposureLevel,
    pub rows: Vec<AnalysisRow>,
    /// Exposed share of queries (query level) or of units (user level);
    /// 1.0 when unfiltered.
    pub exposure_rate: f64,
    pub n_rows_total: usize,
}

/// Index-based core shared with the experiment engine: returns kept row
/// positions and the exposure rate.
pub(crate) fn filter_indices(
    units: &[usize],
    exposed: &[bool],
    level: ExposureLevel,
) -> (Vec<usize>, f64) {
    let n = units.len();
    match level {
        ExposureLevel::None => ((0..n).collect(), 1.0),
        ExposureLevel::QueryLevel => {
            let kept: Vec<usize> = (0..n).filter(|&i| exposed[i]).collect();
            let rate = if n == 0 { 0.0 } else { kept.len() as f64 / n as f64 };
            (kept, rate)
        }
        ExposureLevel::UserLevel => {
            let all: HashSet<usize> = units.iter().copied().collect();
            let hit: HashSet<usize> = (0..n).filter(|&i| exposed[i]).map(|i| units[i]).collect();
            let kept = (0..n).filter(|&i| hit.contains(&units[i])).collect();
            let rate = if all.is_empty() { 0.0 } else { hit.len() as f64 / all.len() as f64 };
            (kept, rate)
        }
    }
}

pub fn exposure_filter(
    rows: &[AnalysisRow],
    pairs: &[ReconstructedPair],
    level: ExposureLevel,
) -> Result<FilteredSet> {
    let differs: HashMap<&str, bool> = pairs.iter().map(|p| (p.query_id.as_str(), p.differs())).collect();
    let mut unit_ids: HashMap<&str, usize> = HashMap::new();
    let mut units = Vec::with_capacity(rows.len());
    let mut exposed = Vec::with_capacity(rows.len());
    for r in rows {
        let d = *differs
            .get(r.query_id.as_str())
            .ok_or_else(|| Error::MissingPair(r.query_id.clone()))?;
        let next = unit_ids.len();
        units.push(*unit_ids.entry(r.unit_id.as_str()).or_insert(next));
        exposed.push(d);
    }
    let (kept, exposure_rate) = filter_indices(&units, &exposed, level);
    Ok(FilteredSet {
        level,
        rows: kept.into_iter().map(|i| rows[i].clone()).collect(),
        exposure_rate,
        n_rows_total: rows.len(),
    })
}

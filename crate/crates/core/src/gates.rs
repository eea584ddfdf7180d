//! Criteria and gate evaluation.
//!
//! A criterion compares one named statistic against a threshold. Statistics
//! are addressed by dotted paths (`by_success.previously_unsuccessful.width`).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Necessary,
    Sufficient,
    Guardrail,
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CriterionKind::Necessary => "necessary",
            CriterionKind::Sufficient => "sufficient",
            CriterionKind::Guardrail => "guardrail",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<", alias = "lt")]
    Lt,
    #[serde(rename = "<=", alias = "≤", alias = "le")]
    Le,
    #[serde(rename = ">", alias = "gt")]
    Gt,
    #[serde(rename = ">=", alias = "≥", alias = "ge")]
    Ge,
}

impl Comparator {
    pub fn holds(self, observed: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => observed < threshold,
            Comparator::Le => observed <= threshold,
            Comparator::Gt => observed > threshold,
            Comparator::Ge => observed >= threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: String,
    pub stat: String,
    pub cmp: Comparator,
    pub threshold: f64,
    pub kind: CriterionKind,
    /// Owning stage; inferred from the first path segment when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

impl Criterion {
    pub fn new(id: &str, stat: &str, cmp: Comparator, threshold: f64, kind: CriterionKind) -> Self {
        Criterion {
            id: id.to_string(),
            stat: stat.to_string(),
            cmp,
            threshold,
            kind,
            stage: None,
        }
    }

    pub fn describe(&self) -> String {
        format!("{} {} {}", self.stat, self.cmp.symbol(), self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub criterion_id: String,
    pub kind: CriterionKind,
    pub stat: String,
    /// `None` when the statistic is undefined (e.g. no changed queries).
    pub observed: Option<f64>,
    pub comparator: Comparator,
    pub threshold: f64,
    pub passed: bool,
}

/// Named statistics of one report. `None` marks a defined-but-undefined cell.
pub type StatMap = BTreeMap<String, Option<f64>>;

pub fn evaluate_gates(stats: &StatMap, criteria: &[Criterion]) -> Result<Vec<GateOutcome>> {
    criteria
        .iter()
        .map(|c| {
            let observed = *stats
                .get(&c.stat)
                .ok_or_else(|| Error::UnknownStatistic(c.stat.clone()))?;
            Ok(GateOutcome {
                criterion_id: c.id.clone(),
                kind: c.kind,
                stat: c.stat.clone(),
                observed,
                comparator: c.cmp,
                threshold: c.threshold,
                passed: observed.is_some_and(|o| c.cmp.holds(o, c.threshold)),
            })
        })
        .collect()
}

/// Re-keys a stage's statistics under `prefix.` for funnel-wide addressing.
pub fn prefixed(prefix: &str, stats: &StatMap) -> StatMap {
    stats
        .iter()
        .map(|(k, v)| (format!("{prefix}.{k}"), *v))
        .collect()
}

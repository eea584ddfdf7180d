//! Offline verification: how many queries changed (width), how much they
//! changed (depth), segmented by prior success and by query attributes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::counterfactual::{reconstruct_pair, Scorer};
use crate::error::{Error, Result};
use crate::gates::{evaluate_gates, Criterion, GateOutcome, StatMap};
use crate::similarity::similarity;
use crate::stats::Summary;
use crate::types::{successful_queries, CounterfactualRecord, Interaction, ResultList};

pub const PREVIOUSLY_SUCCESSFUL: &str = "previously_successful";
pub const PREVIOUSLY_UNSUCCESSFUL: &str = "previously_unsuccessful";
/// Segment value for queries lacking a segmentation attribute.
pub const MISSING_ATTRIBUTE: &str = "(missing)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthDepth {
    pub width: f64,
    pub depth_jaccard: Option<Summary>,
    pub depth_spearman: Option<Summary>,
    pub n_queries: usize,
    pub n_changed: usize,
}

impl WidthDepth {
    fn write_stats(&self, prefix: &str, out: &mut StatMap) {
        out.insert(format!("{prefix}.width"), (self.n_queries > 0).then_some(self.width));
        out.insert(format!("{prefix}.n_queries"), Some(self.n_queries as f64));
        out.insert(format!("{prefix}.n_changed"), Some(self.n_changed as f64));
        for (name, summary) in [("depth_jaccard", &self.depth_jaccard), ("depth_spearman", &self.depth_spearman)] {
            for (field, value) in [
                ("mean", summary.map(|s| s.mean)),
                ("p25", summary.map(|s| s.p25)),
                ("p50", summary.map(|s| s.p50)),
                ("p75", summary.map(|s| s.p75)),
            ] {
                out.insert(format!("{prefix}.{name}.{field}"), value);
            }
        }
    }
}

/// A pair changed iff the ordered sequences differ.
pub fn width_depth<'a, I>(pairs: I) -> WidthDepth
where
    I: IntoIterator<Item = (&'a ResultList, &'a ResultList)>,
{
    let mut n = 0;
    let mut jaccards = Vec::new();
    let mut spearmans = Vec::new();
    for (a, b) in pairs {
        n += 1;
        if a.items != b.items {
            let s = similarity(a, b);
            jaccards.push(s.jaccard);
            if let Some(rho) = s.spearman {
                spearmans.push(rho);
            }
        }
    }
    WidthDepth {
        width: if n == 0 { 0.0 } else { jaccards.len() as f64 / n as f64 },
        depth_jaccard: Summary::of(&jaccards),
        depth_spearman: Summary::of(&spearmans),
        n_queries: n,
        n_changed: jaccards.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub overall: WidthDepth,
    pub by_success: BTreeMap<String, WidthDepth>,
    /// Keyed `attribute=value`.
    pub by_attribute: BTreeMap<String, WidthDepth>,
    pub gates: Vec<GateOutcome>,
}

impl VerificationReport {
    pub fn statistics(&self) -> StatMap {
        let mut out = StatMap::new();
        self.overall.write_stats("overall", &mut out);
        for (seg, wd) in &self.by_success {
            wd.write_stats(&format!("by_success.{seg}"), &mut out);
        }
        for (seg, wd) in &self.by_attribute {
            wd.write_stats(&format!("by_attribute.{seg}"), &mut out);
        }
        out
    }
}

pub fn verification_report(
    records: &[CounterfactualRecord],
    scorer_prod: &Scorer,
    scorer_new: &Scorer,
    interactions: &[Interaction],
    segment_attrs: &[String],
    criteria: &[Criterion],
) -> Result<VerificationReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput("verification needs at least one record".into()));
    }
    let k = records.iter().map(|r| r.served_results.k).max().unwrap_or(1);
    let pairs = reconstruct_pair(records, scorer_prod, scorer_new, k)?;
    let overall = width_depth(pairs.iter().map(|p| (&p.a, &p.b)));

    let successes = successful_queries(interactions);
    let mut by_success = BTreeMap::new();
    for (label, want) in [(PREVIOUSLY_SUCCESSFUL, true), (PREVIOUSLY_UNSUCCESSFUL, false)] {
        let seg = pairs
            .iter()
            .filter(|p| successes.contains(p.query_id.as_str()) == want)
            .map(|p| (&p.a, &p.b));
        by_success.insert(label.to_string(), width_depth(seg));
    }

    let mut by_attribute = BTreeMap::new();
    for attr in segment_attrs {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            let value = r.context.attributes.get(attr).map_or(MISSING_ATTRIBUTE, |v| v.as_str());
            groups.entry(format!("{attr}={value}")).or_default().push(i);
        }
        for (key, idx) in groups {
            let wd = width_depth(idx.iter().map(|&i| (&pairs[i].a, &pairs[i].b)));
            by_attribute.insert(key, wd);
        }
    }

    let mut report = VerificationReport {
        overall,
        by_success,
        by_attribute,
        gates: Vec::new(),
    };
    report.gates = evaluate_gates(&report.statistics(), criteria)?;
    Ok(report)
}

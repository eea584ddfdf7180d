//! Offline validation from judgments: success@k, MRR and NDCG@k, each raw and
//! inverse-propensity weighted, plus judgment-overlap diagnostics.
//!
//! Judgments come from click logs (grade 1 on success clicks, 0 on other
//! displayed items, tagged with the rank the item was logged at) or from
//! human/LLM judgment files. Click-log judgments are reweighted by
//! `1 / examination(logged rank)`, capped at `w_max`.
//!
//! A query whose top-k holds no judged item is excluded from every metric and
//! counted against `judgment_coverage`. NDCG additionally excludes queries
//! with no judged relevant item at all (ideal DCG is zero).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::counterfactual::ReconstructedPair;
use crate::error::{Error, Result};
use crate::gates::StatMap;
use crate::types::{successful_queries, CounterfactualRecord, Interaction, ItemId, ResultList};

pub const DEFAULT_W_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentSource {
    ClickLog,
    Human,
    Llm,
}

impl JudgmentSource {
    /// Higher wins when several sources judge the same item.
    fn priority(self) -> u8 {
        match self {
            JudgmentSource::Human => 2,
            JudgmentSource::Llm => 1,
            JudgmentSource::ClickLog => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub query_id: String,
    pub item: ItemId,
    pub relevance: u32,
    pub source: JudgmentSource,
    /// Display rank the judgment was observed at (click logs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

/// Examination probability as a function of 1-based rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExaminationCurve {
    Uniform,
    /// `decay^(rank-1)`
    Geometric { decay: f64 },
    /// Explicit per-rank probabilities; ranks beyond the table reuse the last entry.
    Table { probabilities: Vec<f64> },
}

impl ExaminationCurve {
    pub fn examination(&self, rank: usize) -> f64 {
        match self {
            ExaminationCurve::Uniform => 1.0,
            ExaminationCurve::Geometric { decay } => decay.powi(rank.saturating_sub(1) as i32),
            ExaminationCurve::Table { probabilities } => probabilities
                .get(rank.saturating_sub(1))
                .or(probabilities.last())
                .copied()
                .unwrap_or(0.0),
        }
    }
}

pub fn ips_weight(rank: usize, curve: &ExaminationCurve, w_max: f64) -> Result<f64> {
    if rank == 0 {
        return Err(Error::InvalidValue("rank must be >= 1".into()));
    }
    let e = curve.examination(rank);
    if e <= 0.0 {
        return Err(Error::ZeroExamination { rank });
    }
    Ok((1.0 / e).min(w_max))
}

/// Standard NDCG@k with gain `2^grade - 1` and discount `1/log2(rank+1)`.
/// `None` when no judged item has positive grade.
pub fn ndcg_at_k(result: &ResultList, judgments: &HashMap<ItemId, u32>, k: usize) -> Option<f64> {
    let gain = |g: u32| 2f64.powi(g as i32) - 1.0;
    let mut ideal: Vec<f64> = judgments.values().filter(|&&g| g > 0).map(|&g| gain(g)).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = discounted(ideal.iter().copied().take(k));
    let dcg = discounted(
        result.items.iter().take(k).map(|i| judgments.get(i).map_or(0.0, |&g| gain(g))),
    );
    Some(dcg / idcg)
}

fn discounted(gains: impl Iterator<Item = f64>) -> f64 {
    gains
        .enumerate()
        .map(|(i, g)| g / ((i + 2) as f64).log2())
        .sum()
}

/// Grade 1 for success-flagged displayed items, 0 for the other displayed
/// items, tagged with the logged rank.
pub fn judgments_from_clicks(records: &[CounterfactualRecord], interactions: &[Interaction]) -> Vec<Judgment> {
    let mut success: HashMap<(&str, &ItemId), bool> = HashMap::new();
    for it in interactions {
        if it.success {
            success.insert((it.query_id.as_str(), &it.item), true);
        }
    }
    let mut out = Vec::new();
    for r in records {
        let qid = r.context.query_id.as_str();
        for (pos, item) in r.served_results.items.iter().enumerate() {
            out.push(Judgment {
                query_id: qid.to_string(),
                item: item.clone(),
                relevance: u32::from(success.contains_key(&(qid, item))),
                source: JudgmentSource::ClickLog,
                rank: Some(pos + 1),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct JudgedItem {
    grade: u32,
    weight: f64,
    priority: u8,
}

/// Judgments indexed by query then item, with IPS weights resolved.
#[derive(Debug, Clone, Default)]
pub struct JudgmentIndex {
    by_query: HashMap<String, HashMap<ItemId, JudgedItem>>,
}

impl JudgmentIndex {
    pub fn build(judgments: &[Judgment], curve: &ExaminationCurve, w_max: f64, max_grade: u32) -> Result<Self> {
        let mut by_query: HashMap<String, HashMap<ItemId, JudgedItem>> = HashMap::new();
        for j in judgments {
            if j.relevance > max_grade {
                return Err(Error::InvalidValue(format!(
                    "judgment ({}, {}) grade {} exceeds max_grade {max_grade}",
                    j.query_id, j.item, j.relevance
                )));
            }
            let weight = match (j.source, j.rank) {
                (JudgmentSource::ClickLog, Some(rank)) => ips_weight(rank, curve, w_max)?,
                _ => 1.0,
            };
            let entry = JudgedItem {
                grade: j.relevance,
                weight,
                priority: j.source.priority(),
            };
            let slot = by_query.entry(j.query_id.clone()).or_default();
            match slot.get(&j.item) {
                Some(prev) if prev.priority >= entry.priority => {}
                _ => {
                    slot.insert(j.item.clone(), entry);
                }
            }
        }
        Ok(JudgmentIndex { by_query })
    }

    pub fn is_empty(&self) -> bool {
        self.by_query.is_empty()
    }

    pub fn has_judged_in(&self, query_id: &str, list: &ResultList, k: usize) -> bool {
        self.by_query
            .get(query_id)
            .is_some_and(|m| list.items.iter().take(k).any(|i| m.contains_key(i)))
    }

    pub fn grades(&self, query_id: &str) -> HashMap<ItemId, u32> {
        self.by_query
            .get(query_id)
            .map(|m| m.iter().map(|(i, j)| (i.clone(), j.grade)).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub raw: Option<f64>,
    pub ips_weighted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineValidationReport {
    pub success_at_k: MetricPair,
    pub mrr: MetricPair,
    pub ndcg_at_k: MetricPair,
    pub judgment_coverage: f64,
    pub n_queries: usize,
    pub n_evaluated: usize,
    /// True when no query could be evaluated.
    pub no_overlap: bool,
}

#[derive(Debug, Default)]
struct Acc {
    success: (f64, f64),
    mrr: (f64, f64),
    ndcg: (f64, f64),
    n: usize,
    n_ndcg: usize,
}

fn per_query(acc: &mut Acc, list: &ResultList, judged: &HashMap<ItemId, JudgedItem>, k: usize) {
    acc.n += 1;
    let top: Vec<&ItemId> = list.items.iter().take(k).collect();
    let relevant = top
        .iter()
        .enumerate()
        .filter_map(|(pos, i)| judged.get(*i).filter(|j| j.grade > 0).map(|j| (pos + 1, j)));
    let mut first: Option<(usize, f64)> = None;
    let mut max_w = 0.0f64;
    for (rank, j) in relevant {
        first.get_or_insert((rank, j.weight));
        max_w = max_w.max(j.weight);
    }
    if let Some((rank, w)) = first {
        acc.success.0 += 1.0;
        acc.success.1 += max_w;
        acc.mrr.0 += 1.0 / rank as f64;
        acc.mrr.1 += w / rank as f64;
    }

    let gain = |g: u32| 2f64.powi(g as i32) - 1.0;
    let mut ideal_raw: Vec<f64> = judged.values().filter(|j| j.grade > 0).map(|j| gain(j.grade)).collect();
    if ideal_raw.is_empty() {
        return;
    }
    let mut ideal_w: Vec<f64> = judged
        .values()
        .filter(|j| j.grade > 0)
        .map(|j| j.weight * gain(j.grade))
        .collect();
    ideal_raw.sort_by(|a, b| b.total_cmp(a));
    ideal_w.sort_by(|a, b| b.total_cmp(a));
    let dcg_raw = discounted(top.iter().map(|i| judged.get(*i).map_or(0.0, |j| gain(j.grade))));
    let dcg_w = discounted(top.iter().map(|i| judged.get(*i).map_or(0.0, |j| j.weight * gain(j.grade))));
    acc.ndcg.0 += dcg_raw / discounted(ideal_raw.into_iter().take(k));
    acc.ndcg.1 += dcg_w / discounted(ideal_w.into_iter().take(k));
    acc.n_ndcg += 1;
}

fn finish(acc: &Acc, n_queries: usize) -> OfflineValidationReport {
    let avg = |sum: f64, n: usize| (n > 0).then(|| (sum / n as f64).clamp(0.0, 1.0));
    OfflineValidationReport {
        success_at_k: MetricPair { raw: avg(acc.success.0, acc.n), ips_weighted: avg(acc.success.1, acc.n) },
        mrr: MetricPair { raw: avg(acc.mrr.0, acc.n), ips_weighted: avg(acc.mrr.1, acc.n) },
        ndcg_at_k: MetricPair { raw: avg(acc.ndcg.0, acc.n_ndcg), ips_weighted: avg(acc.ndcg.1, acc.n_ndcg) },
        judgment_coverage: if n_queries == 0 { 0.0 } else { acc.n as f64 / n_queries as f64 },
        n_queries,
        n_evaluated: acc.n,
        no_overlap: acc.n == 0,
    }
}

/// Metrics for one ranked list per query.
pub fn validate_lists<'a>(
    lists: impl IntoIterator<Item = (&'a str, &'a ResultList)>,
    index: &JudgmentIndex,
    k: usize,
) -> OfflineValidationReport {
    let mut acc = Acc::default();
    let mut n = 0;
    for (qid, list) in lists {
        n += 1;
        if let Some(judged) = index.by_query.get(qid) {
            if list.items.iter().take(k).any(|i| judged.contains_key(i)) {
                per_query(&mut acc, list, judged, k);
            }
        }
    }
    finish(&acc, n)
}

/// Fraction of changed queries whose new (`b`) top-k holds a judged item.
/// With no changed queries, the fraction is taken over all queries.
pub fn overlap_diagnostic(pairs: &[ReconstructedPair], index: &JudgmentIndex, k: usize) -> f64 {
    let changed: Vec<&ReconstructedPair> = pairs.iter().filter(|p| p.differs()).collect();
    let pool: Vec<&ReconstructedPair> = if changed.is_empty() { pairs.iter().collect() } else { changed };
    if pool.is_empty() {
        return 0.0;
    }
    let covered = pool.iter().filter(|p| index.has_judged_in(&p.query_id, &p.b, k)).count();
    covered as f64 / pool.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedOfflineReport {
    pub control: OfflineValidationReport,
    pub candidate: OfflineValidationReport,
    pub overlap: f64,
}

impl PairedOfflineReport {
    pub fn statistics(&self) -> StatMap {
        let mut out = StatMap::new();
        for (side, r) in [("control", &self.control), ("candidate", &self.candidate)] {
            for (name, m) in [("success_at_k", r.success_at_k), ("mrr", r.mrr), ("ndcg_at_k", r.ndcg_at_k)] {
                out.insert(format!("{side}.{name}.raw"), m.raw);
                out.insert(format!("{side}.{name}.ips_weighted"), m.ips_weighted);
            }
            out.insert(format!("{side}.judgment_coverage"), Some(r.judgment_coverage));
        }
        let metrics = [
            ("success_at_k", self.control.success_at_k, self.candidate.success_at_k),
            ("mrr", self.control.mrr, self.candidate.mrr),
            ("ndcg_at_k", self.control.ndcg_at_k, self.candidate.ndcg_at_k),
        ];
        for (name, c, t) in metrics {
            let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| b - a);
            out.insert(format!("delta.{name}.raw"), diff(c.raw, t.raw));
            out.insert(format!("delta.{name}.ips_weighted"), diff(c.ips_weighted, t.ips_weighted));
        }
        out.insert("judgment_coverage".into(), Some(self.candidate.judgment_coverage));
        out.insert("overlap".into(), Some(self.overlap));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineValidationConfig {
    pub k: usize,
    pub curve: ExaminationCurve,
    pub w_max: f64,
    pub max_grade: u32,
}

impl Default for OfflineValidationConfig {
    fn default() -> Self {
        OfflineValidationConfig {
            k: 10,
            curve: ExaminationCurve::Uniform,
            w_max: DEFAULT_W_MAX,
            max_grade: 4,
        }
    }
}

/// Reports for both sides of each reconstructed pair (`a` = control, `b` = candidate).
pub fn offline_validation_report(
    pairs: &[ReconstructedPair],
    judgments: &[Judgment],
    config: &OfflineValidationConfig,
) -> Result<PairedOfflineReport> {
    if judgments.is_empty() {
        return Err(Error::EmptyInput("offline validation needs judgments".into()));
    }
    let index = JudgmentIndex::build(judgments, &config.curve, config.w_max, config.max_grade)?;
    Ok(PairedOfflineReport {
        control: validate_lists(pairs.iter().map(|p| (p.query_id.as_str(), &p.a)), &index, config.k),
        candidate: validate_lists(pairs.iter().map(|p| (p.query_id.as_str(), &p.b)), &index, config.k),
        overlap: overlap_diagnostic(pairs, &index, config.k),
    })
}

/// Share of logged queries that succeeded, by query id; convenience for reports.
pub fn logged_success_rate(records: &[CounterfactualRecord], interactions: &[Interaction]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let s = successful_queries(interactions);
    records.iter().filter(|r| s.contains(r.context.query_id.as_str())).count() as f64 / records.len() as f64
}

/// Judgments grouped per query for callers that want plain grade maps.
pub fn grades_by_query(judgments: &[Judgment]) -> BTreeMap<String, HashMap<ItemId, u32>> {
    let mut out: BTreeMap<String, HashMap<ItemId, u32>> = BTreeMap::new();
    for j in judgments {
        out.entry(j.query_id.clone()).or_default().insert(j.item.clone(), j.relevance);
    }
    out
}

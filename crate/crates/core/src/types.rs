//! Domain types shared by every stage of the funnel.
//!
//! All types are plain values: once parsed or generated they are never
//! mutated, so they can be shared freely across threads.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque item identifier. Ordering and equality are exact byte comparisons.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Self {
        ItemId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryContext {
    pub query_id: String,
    pub user_id: String,
    pub query_text: String,
    /// Milliseconds since the epoch.
    pub timestamp: i64,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// Feature snapshot of one retrieved candidate.
///
/// `attributes` carries item metadata (e.g. `kind = "promo"`) that boost
/// rules match against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFeatures {
    pub item: ItemId,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl CandidateFeatures {
    pub fn new(item: impl Into<String>, features: Vec<f64>) -> Self {
        CandidateFeatures {
            item: ItemId::new(item),
            features,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: &str) -> Self {
        self.attributes.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantId {
    pub name: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

impl VariantId {
    pub fn named(name: impl Into<String>) -> Self {
        VariantId {
            name: name.into(),
            parameters: BTreeMap::new(),
        }
    }
}

/// Ordered list of displayed items, at most `k` long.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResultList {
    pub items: Vec<ItemId>,
    pub k: usize,
}

impl ResultList {
    pub fn new(items: Vec<ItemId>, k: usize) -> Self {
        ResultList { items, k }
    }

    /// Convenience constructor for tests and fixtures; `k` is the list length.
    pub fn from_ids<S: AsRef<str>>(ids: &[S]) -> Self {
        let items: Vec<ItemId> = ids.iter().map(|s| ItemId::new(s.as_ref())).collect();
        let k = items.len().max(1);
        ResultList { items, k }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// 1-based rank of `item`, if displayed.
    pub fn rank_of(&self, item: &ItemId) -> Option<usize> {
        self.items.iter().position(|i| i == item).map(|p| p + 1)
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.items.contains(item)
    }

    /// Checks the list invariants, returning a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be positive".into());
        }
        if self.items.len() > self.k {
            return Err(format!("{} items exceed k={}", self.items.len(), self.k));
        }
        let mut seen = HashSet::with_capacity(self.items.len());
        for item in &self.items {
            if item.0.is_empty() {
                return Err("empty item id".into());
            }
            if !seen.insert(item) {
                return Err(format!("duplicate item `{item}`"));
            }
        }
        Ok(())
    }
}

/// One logged query with everything needed to re-rank it under any variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub context: QueryContext,
    pub candidates: Vec<CandidateFeatures>,
    pub served_variant: VariantId,
    pub served_results: ResultList,
}

impl CounterfactualRecord {
    pub fn dimension(&self) -> usize {
        self.candidates.first().map_or(0, |c| c.features.len())
    }

    pub fn candidate(&self, item: &ItemId) -> Option<&CandidateFeatures> {
        self.candidates.iter().find(|c| &c.item == item)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Click,
    Consume,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub query_id: String,
    pub item: ItemId,
    /// 1-based display position.
    pub rank: usize,
    pub action: Action,
    pub success: bool,
}

/// A query succeeded iff any of its interactions is flagged as a success.
pub fn success_of_query(interactions: &[Interaction], query_id: &str) -> bool {
    interactions
        .iter()
        .any(|i| i.query_id == query_id && i.success)
}

/// Set of successful query ids, for repeated lookups over large logs.
pub fn successful_queries(interactions: &[Interaction]) -> HashSet<&str> {
    interactions
        .iter()
        .filter(|i| i.success)
        .map(|i| i.query_id.as_str())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn click(q: &str, item: &str, rank: usize, success: bool) -> Interaction {
        Interaction {
            query_id: q.into(),
            item: item.into(),
            rank,
            action: Action::Click,
            success,
        }
    }

    #[test]
    fn success_requires_flagged_interaction() {
        assert!(!success_of_query(&[], "q1"));
        assert!(success_of_query(&[click("q1", "a", 3, true)], "q1"));
        let both_fail = [click("q1", "a", 1, false), click("q1", "b", 2, false)];
        assert!(!success_of_query(&both_fail, "q1"));
        assert!(!success_of_query(&[click("q2", "a", 1, true)], "q1"));
    }

    #[test]
    fn result_list_invariants() {
        assert!(ResultList::from_ids(&["a", "b"]).check().is_ok());
        let dup = ResultList::from_ids(&["a", "b", "a"]);
        assert!(dup.check().unwrap_err().contains("duplicate item"));
        let long = ResultList::new(ResultList::from_ids(&["a", "b"]).items, 1);
        assert!(long.check().is_err());
    }

    #[test]
    fn item_order_is_bytewise() {
        let mut ids = vec![ItemId::new("b"), ItemId::new("B"), ItemId::new("a")];
        ids.sort();
        assert_eq!(ids, vec![ItemId::new("B"), ItemId::new("a"), ItemId::new("b")]);
    }
}

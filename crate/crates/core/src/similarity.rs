//! Rank-list similarity: Jaccard overlap of content and Spearman correlation
//! of order over the shared items.
//!
//! The pair separates content change from order change. Spearman is computed
//! on the intersection only, with each list's ranks re-densified to `1..=n`,
//! and is undefined for fewer than two shared items.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::types::{ItemId, ResultList};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub jaccard: f64,
    pub spearman: Option<f64>,
    pub n_shared: usize,
}

/// `|A ∩ B| / |A ∪ B|`; two empty lists are identical (1.0).
pub fn jaccard(a: &ResultList, b: &ResultList) -> f64 {
    let sa: HashSet<&ItemId> = a.items.iter().collect();
    let sb: HashSet<&ItemId> = b.items.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

pub fn spearman_shared(a: &ResultList, b: &ResultList) -> Option<f64> {
    let in_b: HashSet<&ItemId> = b.items.iter().collect();
    let shared_a: Vec<&ItemId> = a.items.iter().filter(|i| in_b.contains(i)).collect();
    let n = shared_a.len();
    if n < 2 {
        return None;
    }
    let in_a: HashSet<&ItemId> = shared_a.iter().copied().collect();
    let rank_b: HashMap<&ItemId, usize> = b
        .items
        .iter()
        .filter(|i| in_a.contains(i))
        .enumerate()
        .map(|(r, i)| (i, r))
        .collect();
    let sum_d2: f64 = shared_a
        .iter()
        .enumerate()
        .map(|(ra, item)| {
            let d = ra as f64 - rank_b[item] as f64;
            d * d
        })
        .sum();
    let n = n as f64;
    Some(1.0 - 6.0 * sum_d2 / (n * (n * n - 1.0)))
}

pub fn similarity(a: &ResultList, b: &ResultList) -> SimilarityScore {
    let sb: HashSet<&ItemId> = b.items.iter().collect();
    SimilarityScore {
        jaccard: jaccard(a, b),
        spearman: spearman_shared(a, b),
        n_shared: a.items.iter().filter(|i| sb.contains(i)).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(ids: &[&str]) -> ResultList {
        ResultList::from_ids(ids)
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&l(&["a", "b", "c"]), &l(&["a", "b", "c"])), 1.0);
        assert_eq!(jaccard(&l(&["a", "b", "c"]), &l(&["d", "e", "f"])), 0.0);
        assert_eq!(jaccard(&l(&["a", "b", "c"]), &l(&["b", "c", "d"])), 0.5);
        assert_eq!(jaccard(&l(&[]), &l(&[])), 1.0);
    }

    #[test]
    fn spearman_examples() {
        let five = l(&["a", "b", "c", "d", "e"]);
        assert_eq!(spearman_shared(&five, &five), Some(1.0));
        assert_eq!(spearman_shared(&l(&["x", "y", "z"]), &l(&["z", "y", "x"])), Some(-1.0));
        assert_eq!(spearman_shared(&l(&["x", "y", "z"]), &l(&["x", "z", "y"])), Some(0.5));
    }

    #[test]
    fn spearman_uses_shared_items_only() {
        // shared order in both lists is b, c
        let a = l(&["a", "b", "q", "c"]);
        let b = l(&["b", "z", "c", "w"]);
        assert_eq!(spearman_shared(&a, &b), Some(1.0));
    }

    #[test]
    fn similarity_bundles() {
        let a = l(&["a", "b", "c"]);
        assert_eq!(
            similarity(&a, &a),
            SimilarityScore { jaccard: 1.0, spearman: Some(1.0), n_shared: 3 }
        );
        let one = similarity(&a, &l(&["c", "x"]));
        assert!(one.jaccard > 0.0);
        assert_eq!((one.spearman, one.n_shared), (None, 1));
        let none = similarity(&a, &l(&["x", "y"]));
        assert_eq!((none.jaccard, none.spearman, none.n_shared), (0.0, None, 0));
    }
}

//! Counterfactual reconstruction: re-rank logged candidates under any
//! variant and quality-check the reconstruction against what was served.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::similarity;
use crate::types::{CandidateFeatures, CounterfactualRecord, ResultList, VariantId};

/// Additive boost applied to candidates whose metadata has `attr == value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostRule {
    pub attr: String,
    pub value: String,
    pub boost: f64,
}

impl BoostRule {
    pub fn new(attr: &str, value: &str, boost: f64) -> Self {
        BoostRule {
            attr: attr.to_string(),
            value: value.to_string(),
            boost,
        }
    }

    pub fn matches(&self, c: &CandidateFeatures) -> bool {
        c.attributes.get(&self.attr).is_some_and(|v| v == &self.value)
    }
}

/// Linear scorer plus additive boost rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorer {
    pub variant: VariantId,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub boosts: Vec<BoostRule>,
}

impl Scorer {
    pub fn new(name: &str, weights: Vec<f64>) -> Self {
        Scorer {
            variant: VariantId::named(name),
            weights,
            boosts: Vec::new(),
        }
    }

    pub fn with_boost(mut self, rule: BoostRule) -> Self {
        self.boosts.push(rule);
        self
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, c: &CandidateFeatures) -> f64 {
        let linear: f64 = self.weights.iter().zip(&c.features).map(|(w, f)| w * f).sum();
        let boost: f64 = self.boosts.iter().filter(|b| b.matches(c)).map(|b| b.boost).sum();
        linear + boost
    }

    /// Same ranking behaviour: weights and boosts equal (variant name ignored).
    pub fn same_ranking_as(&self, other: &Scorer) -> bool {
        self.weights == other.weights && self.boosts == other.boosts
    }

    /// Ranks an arbitrary candidate slice; descending score, ties by item id.
    pub fn rank(&self, candidates: &[CandidateFeatures], k: usize) -> Result<ResultList> {
        if k == 0 {
            return Err(Error::InvalidValue("k must be >= 1".into()));
        }
        let mut scored = Vec::with_capacity(candidates.len());
        for c in candidates {
            if c.features.len() != self.weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.weights.len(),
                    found: c.features.len(),
                });
            }
            scored.push((self.score(c), &c.item));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(ResultList::new(
            scored.into_iter().take(k).map(|(_, i)| i.clone()).collect(),
            k,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionQuality {
    pub mean_jaccard: f64,
    /// Mean over records where Spearman is defined; `None` if never defined.
    pub mean_spearman: Option<f64>,
    pub exact_match_rate: f64,
    pub n_queries: usize,
}

pub fn reconstruct(record: &CounterfactualRecord, scorer: &Scorer, k: usize) -> Result<ResultList> {
    scorer.rank(&record.candidates, k)
}

pub fn quality_check(
    records: &[CounterfactualRecord],
    production_scorer: &Scorer,
) -> Result<ReconstructionQuality> {
    if records.is_empty() {
        return Err(Error::EmptyInput("quality check needs at least one record".into()));
    }
    let per_record: Vec<(f64, Option<f64>, bool)> = records
        .par_iter()
        .map(|r| {
            let rebuilt = reconstruct(r, production_scorer, r.served_results.k)?;
            let sim = similarity(&rebuilt, &r.served_results);
            Ok((sim.jaccard, sim.spearman, rebuilt.items == r.served_results.items))
        })
        .collect::<Result<_>>()?;
    let n = per_record.len() as f64;
    let mean_jaccard = per_record.iter().map(|p| p.0).sum::<f64>() / n;
    let defined: Vec<f64> = per_record.iter().filter_map(|p| p.1).collect();
    let mean_spearman =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let exact = per_record.iter().filter(|p| p.2).count();
    Ok(ReconstructionQuality {
        mean_jaccard,
        mean_spearman,
        exact_match_rate: exact as f64 / n,
        n_queries: records.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedPair {
    pub query_id: String,
    pub a: ResultList,
    pub b: ResultList,
}

impl ReconstructedPair {
    pub fn differs(&self) -> bool {
        self.a.items != self.b.items
    }
}

pub fn reconstruct_pair(
    records: &[CounterfactualRecord],
    scorer_a: &Scorer,
    scorer_b: &Scorer,
    k: usize,
) -> Result<Vec<ReconstructedPair>> {
    records
        .par_iter()
        .map(|r| {
            Ok(ReconstructedPair {
                query_id: r.context.query_id.clone(),
                a: reconstruct(r, scorer_a, k)?,
                b: reconstruct(r, scorer_b, k)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ItemId, QueryContext};

    pub(crate) fn record(qid: &str, cands: Vec<CandidateFeatures>, served: &[&str]) -> CounterfactualRecord {
        CounterfactualRecord {
            context: QueryContext {
                query_id: qid.into(),
                user_id: "u".into(),
                query_text: String::new(),
                timestamp: 0,
                attributes: Default::default(),
            },
            candidates: cands,
            served_variant: VariantId::named("prod"),
            served_results: ResultList::new(served.iter().map(|s| ItemId::new(*s)).collect(), 2),
        }
    }

    #[test]
    fn single_candidate() {
        let r = record("q", vec![CandidateFeatures::new("only", vec![0.3, 0.1])], &["only"]);
        let out = reconstruct(&r, &Scorer::new("s", vec![-5.0, 2.0]), 3).unwrap();
        assert_eq!(out.items, vec![ItemId::new("only")]);
    }

    #[test]
    fn weights_favor_b() {
        // A = (1, 0), B = (0, 1); w = (0.2, 0.9) gives A 0.2, B 0.9
        let r = record(
            "q",
            vec![CandidateFeatures::new("A", vec![1.0, 0.0]), CandidateFeatures::new("B", vec![0.0, 1.0])],
            &["A", "B"],
        );
        let out = reconstruct(&r, &Scorer::new("s", vec![0.2, 0.9]), 2).unwrap();
        assert_eq!(out, ResultList::from_ids(&["B", "A"]));
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let r = record(
            "q",
            vec![
                CandidateFeatures::new("c", vec![1.0]),
                CandidateFeatures::new("a", vec![1.0]),
                CandidateFeatures::new("b", vec![1.0]),
            ],
            &["a"],
        );
        let out = reconstruct(&r, &Scorer::new("s", vec![1.0]), 3).unwrap();
        assert_eq!(out, ResultList::from_ids(&["a", "b", "c"]));
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let r = record("q", vec![CandidateFeatures::new("a", vec![1.0, 2.0])], &["a"]);
        assert!(matches!(
            reconstruct(&r, &Scorer::new("s", vec![1.0]), 1),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn boosts_apply_to_matching_metadata() {
        let r = record(
            "q",
            vec![
                CandidateFeatures::new("a", vec![1.0]),
                CandidateFeatures::new("p", vec![0.5]).with_attr("kind", "promo"),
            ],
            &["a"],
        );
        let s = Scorer::new("s", vec![1.0]).with_boost(BoostRule::new("kind", "promo", 0.6));
        assert_eq!(reconstruct(&r, &s, 2).unwrap(), ResultList::from_ids(&["p", "a"]));
    }

    #[test]
    fn quality_check_flags_perturbed_weight() {
        // served under w=(1,0): x (1.0) above y (0.8)
        let cands = vec![
            CandidateFeatures::new("x", vec![1.0, 0.0]),
            CandidateFeatures::new("y", vec![0.8, 0.5]),
        ];
        let recs = vec![record("q1", cands.clone(), &["x", "y"]), record("q2", cands, &["x", "y"])];
        let prod = Scorer::new("prod", vec![1.0, 0.0]);
        let q = quality_check(&recs, &prod).unwrap();
        assert_eq!((q.exact_match_rate, q.mean_jaccard), (1.0, 1.0));
        assert_eq!(q, quality_check(&recs, &prod).unwrap());
        // second weight 0.5 lifts y to 1.05 > 1.0
        let perturbed = Scorer::new("prod", vec![1.0, 0.5]);
        let q = quality_check(&recs, &perturbed).unwrap();
        assert!(q.exact_match_rate < 1.0);
        assert_eq!(q.mean_jaccard, 1.0);
        assert_eq!(q.mean_spearman, Some(-1.0));
        assert!(quality_check(&[], &prod).is_err());
    }

    #[test]
    fn pairs_differ_exactly_where_boundary_crossed() {
        // a = (1, 0), b = (0, t); scorer_a prefers a always, scorer_b (w=(1,1))
        // prefers b when t > 1. t values chosen so exactly 4 of 10 cross.
        let ts = [0.1, 0.5, 0.9, 1.5, 0.2, 2.0, 0.3, 3.0, 0.99, 1.01];
        let recs: Vec<_> = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                record(
                    &format!("q{i}"),
                    vec![CandidateFeatures::new("a", vec![1.0, 0.0]), CandidateFeatures::new("b", vec![0.0, t])],
                    &["a", "b"],
                )
            })
            .collect();
        let sa = Scorer::new("a", vec![1.0, 0.0]);
        let sb = Scorer::new("b", vec![1.0, 1.0]);
        let pairs = reconstruct_pair(&recs, &sa, &sb, 2).unwrap();
        let differing: Vec<_> = pairs.iter().filter(|p| p.differs()).map(|p| p.query_id.as_str()).collect();
        assert_eq!(differing, ["q3", "q5", "q7", "q9"]);
        assert!(reconstruct_pair(&recs, &sa, &sa, 2).unwrap().iter().all(|p| !p.differs()));
        assert!(reconstruct_pair(&[], &sa, &sb, 2).unwrap().is_empty());
    }
}

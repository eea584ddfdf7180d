//! Team-draft interleaving and the within-user preference test.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counterfactual::Scorer;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::simworld::{interact, World};
use crate::stats::binomial_half_cdf;
use crate::types::{Interaction, ItemId, ResultList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Team {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOutcome {
    AWins,
    BWins,
    Tie,
}

impl QueryOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryOutcome::AWins => "a_wins",
            QueryOutcome::BWins => "b_wins",
            QueryOutcome::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleavedList {
    pub items: ResultList,
    pub attribution: BTreeMap<ItemId, Team>,
}

impl InterleavedList {
    pub fn team_of(&self, item: &ItemId) -> Option<Team> {
        self.attribution.get(item).copied()
    }
}

/// Highest-ranked item of `list` not yet taken.
fn next_free<'a>(list: &'a ResultList, cursor: &mut usize, taken: &BTreeMap<ItemId, Team>) -> Option<&'a ItemId> {
    while *cursor < list.items.len() {
        let item = &list.items[*cursor];
        *cursor += 1;
        if !taken.contains_key(item) {
            return Some(item);
        }
    }
    None
}

pub fn team_draft(a: &ResultList, b: &ResultList, k: usize, stream: Stream) -> Result<InterleavedList> {
    if k == 0 {
        return Err(Error::InvalidValue("k must be >= 1".into()));
    }
    let mut rng = stream.rng();
    let mut items = Vec::with_capacity(k);
    let mut attribution = BTreeMap::new();
    let mut cursors = [0usize, 0usize];
    let lists = [a, b];
    'rounds: loop {
        let order = if rng.random_bool(0.5) { [Team::A, Team::B] } else { [Team::B, Team::A] };
        let mut picked_any = false;
        for team in order {
            if items.len() == k {
                break 'rounds;
            }
            let t = team as usize;
            if let Some(item) = next_free(lists[t], &mut cursors[t], &attribution) {
                attribution.insert(item.clone(), team);
                items.push(item.clone());
                picked_any = true;
            }
        }
        if !picked_any || items.len() == k {
            break;
        }
    }
    Ok(InterleavedList {
        items: ResultList::new(items, k),
        attribution,
    })
}

/// Credits each success-flagged interaction to the team that contributed the item.
pub fn score_query(il: &InterleavedList, query_id: &str, interactions: &[Interaction]) -> Result<QueryOutcome> {
    let (mut a, mut b) = (0usize, 0usize);
    for it in interactions.iter().filter(|i| i.query_id == query_id) {
        let team = il.team_of(&it.item).ok_or_else(|| Error::UndisplayedItem {
            query_id: query_id.to_string(),
            item: it.item.to_string(),
        })?;
        if it.success {
            match team {
                Team::A => a += 1,
                Team::B => b += 1,
            }
        }
    }
    Ok(match a.cmp(&b) {
        std::cmp::Ordering::Greater => QueryOutcome::AWins,
        std::cmp::Ordering::Less => QueryOutcome::BWins,
        std::cmp::Ordering::Equal => QueryOutcome::Tie,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceResult {
    pub wins_a: u64,
    pub wins_b: u64,
    pub ties: u64,
    /// `None` when there is no decisive query.
    pub p_value: Option<f64>,
    pub preferred: Option<Team>,
}

/// Exact two-sided sign test on decisive queries (ties dropped).
pub fn preference_test(wins_a: u64, wins_b: u64, ties: u64, alpha: f64) -> PreferenceResult {
    let n = wins_a + wins_b;
    let p_value = (n > 0).then(|| (2.0 * binomial_half_cdf(wins_a.min(wins_b), n)).min(1.0));
    let preferred = match p_value {
        Some(p) if p <= alpha && wins_a != wins_b => Some(if wins_a > wins_b { Team::A } else { Team::B }),
        _ => None,
    };
    PreferenceResult { wins_a, wins_b, ties, p_value, preferred }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleaveRun {
    /// (query id, outcome) in traffic order.
    pub outcomes: Vec<(String, QueryOutcome)>,
    pub test: PreferenceResult,
}

impl InterleaveRun {
    /// Smallest prefix of traffic at which the sign test reaches `alpha`.
    pub fn queries_to_significance(&self, alpha: f64) -> Option<usize> {
        let (mut a, mut b) = (0u64, 0u64);
        for (i, (_, o)) in self.outcomes.iter().enumerate() {
            match o {
                QueryOutcome::AWins => a += 1,
                QueryOutcome::BWins => b += 1,
                QueryOutcome::Tie => {}
            }
            if preference_test(a, b, 0, alpha).preferred.is_some() {
                return Some(i + 1);
            }
        }
        None
    }
}

/// Draws `n_queries` from the traffic model, interleaves both scorers' top-k
/// for each and simulates a session on the interleaved list.
pub fn run_interleave(
    world: &World,
    a: &Scorer,
    b: &Scorer,
    n_queries: usize,
    k: usize,
    alpha: f64,
    stream: Stream,
) -> Result<InterleaveRun> {
    let lists_a = world.rank_all(a, k)?;
    let lists_b = world.rank_all(b, k)?;
    let outcomes = (0..n_queries)
        .into_par_iter()
        .map(|i| {
            let s = stream.child("query").index(i as u64);
            let q = world.sample_query(&mut s.child("traffic").rng());
            let il = team_draft(&lists_a[q], &lists_b[q], k, s.child("draft"))?;
            let id = &world.queries[q].context.query_id;
            let inter = interact(world, id, &il.items, s.child("session"));
            Ok((id.clone(), score_query(&il, id, &inter)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |o: QueryOutcome| outcomes.iter().filter(|(_, x)| *x == o).count() as u64;
    let test = preference_test(
        count(QueryOutcome::AWins),
        count(QueryOutcome::BWins),
        count(QueryOutcome::Tie),
        alpha,
    );
    Ok(InterleaveRun { outcomes, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Action;

    fn ids(l: &ResultList) -> Vec<&str> {
        l.items.iter().map(|i| i.as_str()).collect()
    }

    #[test]
    fn identical_inputs_keep_order() {
        let a = ResultList::from_ids(&["p", "q", "r", "s", "t"]);
        for seed in 0..20 {
            let il = team_draft(&a, &a, 3, Stream::root(seed)).unwrap();
            assert_eq!(ids(&il.items), ["p", "q", "r"]);
            assert_eq!(il.attribution.len(), 3);
        }
    }

    #[test]
    fn two_by_two_alternates_by_round() {
        let a = ResultList::from_ids(&["x", "y"]);
        let b = ResultList::from_ids(&["z", "w"]);
        let mut seen = std::collections::HashSet::new();
        for seed in 0..64 {
            let il = team_draft(&a, &b, 4, Stream::root(seed)).unwrap();
            let got = ids(&il.items);
            let mut first: Vec<_> = got[..2].to_vec();
            first.sort();
            assert_eq!(first, ["x", "z"]);
            let mut second: Vec<_> = got[2..].to_vec();
            second.sort();
            assert_eq!(second, ["w", "y"]);
            assert_eq!(il.team_of(&"x".into()), Some(Team::A));
            assert_eq!(il.team_of(&"w".into()), Some(Team::B));
            seen.insert(got.join(""));
        }
        // two coins, four orders
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn exhaustion_of_disjoint_inputs() {
        let a = ResultList::from_ids(&["a1", "a2", "a3"]);
        let b = ResultList::from_ids(&["b1"]);
        let il = team_draft(&a, &b, 4, Stream::root(5)).unwrap();
        let mut got = ids(&il.items);
        got.sort();
        assert_eq!(got, ["a1", "a2", "a3", "b1"]);
    }

    fn success(item: &str) -> Interaction {
        Interaction { query_id: "q".into(), item: item.into(), rank: 1, action: Action::Click, success: true }
    }

    #[test]
    fn scoring() {
        let a = ResultList::from_ids(&["x", "y"]);
        let b = ResultList::from_ids(&["z", "w"]);
        let il = team_draft(&a, &b, 4, Stream::root(1)).unwrap();
        assert_eq!(score_query(&il, "q", &[]).unwrap(), QueryOutcome::Tie);
        assert_eq!(score_query(&il, "q", &[success("w")]).unwrap(), QueryOutcome::BWins);
        let two_each = [success("x"), success("y"), success("z"), success("w")];
        assert_eq!(score_query(&il, "q", &two_each).unwrap(), QueryOutcome::Tie);
        assert!(matches!(
            score_query(&il, "q", &[success("nope")]),
            Err(Error::UndisplayedItem { .. })
        ));
    }

    #[test]
    fn sign_test_values() {
        let r = preference_test(8, 2, 0, 0.05);
        assert!((r.p_value.unwrap() - 112.0 / 1024.0).abs() < 1e-12);
        assert_eq!(r.preferred, None);
        let none = preference_test(0, 0, 50, 0.05);
        assert_eq!(none.p_value, None);
        assert_eq!(none.preferred, None);
        let strong = preference_test(100, 0, 0, 0.05);
        assert!(strong.p_value.unwrap() < 1e-20);
        assert_eq!(strong.preferred, Some(Team::A));
        assert_eq!(preference_test(5, 5, 0, 0.05).p_value, Some(1.0));
    }
}

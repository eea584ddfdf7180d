//! Synthetic personalized-search world.
//!
//! Items carry latent quality vectors, users carry preference vectors, and
//! each query belongs to one user. A query's intent is the user's preference
//! plus noise; candidates are retrieved by intent · quality, and candidate
//! features are the element-wise product `intent ⊙ quality`, so an all-ones
//! scorer ranks by the retrieval score. Ground-truth relevance comes from the
//! user's true preference, not the noisy intent.
//!
//! Users interact through a position-based click model: rank `r` is examined
//! with probability `decay^(r-1)`, an examined item is clicked with `p_rel`
//! if relevant else `p_irr`, and the first click ends the session. A click
//! on a relevant item is a success.
//!
//! Traffic is "pick an active user uniformly, then one of their queries
//! uniformly"; [`true_success_rate`] is the exact expectation under that
//! traffic model.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::counterfactual::Scorer;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::types::{
    Action, CandidateFeatures, CounterfactualRecord, Interaction, ItemId, QueryContext, ResultList,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_items: usize,
    pub n_users: usize,
    pub n_queries: usize,
    pub feature_dim: usize,
    /// Retrieval depth: candidates logged per query.
    pub n_candidates: usize,
    pub examination_decay: f64,
    pub relevance_click_prob: f64,
    pub nonrelevance_click_prob: f64,
    pub long_query_share: f64,
    pub promo_share: f64,
    /// Candidates per query with positive grade; the best gets grade 2.
    pub relevant_per_query: usize,
    pub intent_noise: f64,
    /// Upper bound on `n_queries * k` for exact enumeration.
    pub max_enumeration: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 1,
            n_items: 400,
            n_users: 500,
            n_queries: 2000,
            feature_dim: 4,
            n_candidates: 20,
            examination_decay: 0.7,
            relevance_click_prob: 0.8,
            nonrelevance_click_prob: 0.1,
            long_query_share: 0.3,
            promo_share: 0.1,
            relevant_per_query: 2,
            intent_noise: 0.7,
            max_enumeration: 10_000_000,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidWorld(m.to_string()));
        if self.n_items == 0 || self.n_users == 0 || self.n_queries == 0 || self.feature_dim == 0 {
            return bad("counts and feature_dim must be >= 1");
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be >= 1");
        }
        if !(self.examination_decay > 0.0 && self.examination_decay <= 1.0) {
            return bad("examination_decay must lie in (0, 1]");
        }
        for (name, p) in [
            ("relevance_click_prob", self.relevance_click_prob),
            ("nonrelevance_click_prob", self.nonrelevance_click_prob),
            ("long_query_share", self.long_query_share),
            ("promo_share", self.promo_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidWorld(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.nonrelevance_click_prob >= self.relevance_click_prob {
            return bad("nonrelevance_click_prob must be below relevance_click_prob");
        }
        if !(self.intent_noise >= 0.0 && self.intent_noise.is_finite()) {
            return bad("intent_noise must be finite and >= 0");
        }
        Ok(())
    }

    pub fn click_model(&self) -> ClickModel {
        ClickModel {
            examination_decay: self.examination_decay,
            p_rel: self.relevance_click_prob,
            p_irr: self.nonrelevance_click_prob,
        }
    }
}

/// Position-based model with geometric examination and first-click cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickModel {
    pub examination_decay: f64,
    pub p_rel: f64,
    pub p_irr: f64,
}

impl ClickModel {
    pub fn examination(&self, rank: usize) -> f64 {
        self.examination_decay.powi(rank as i32 - 1)
    }

    fn attractiveness(&self, grade: u32) -> f64 {
        if grade > 0 {
            self.p_rel
        } else {
            self.p_irr
        }
    }

    /// Exact P(first click lands on a relevant item) for grades listed by rank.
    pub fn success_probability(&self, grades: &[u32]) -> f64 {
        let mut no_click_yet = 1.0;
        let mut p = 0.0;
        for (pos, &g) in grades.iter().enumerate() {
            let click = self.examination(pos + 1) * self.attractiveness(g);
            if g > 0 {
                p += no_click_yet * click;
            }
            no_click_yet *= 1.0 - click;
        }
        p
    }

    /// Exact P(any click).
    pub fn click_probability(&self, grades: &[u32]) -> f64 {
        1.0 - grades
            .iter()
            .enumerate()
            .map(|(pos, &g)| 1.0 - self.examination(pos + 1) * self.attractiveness(g))
            .product::<f64>()
    }

    /// Samples the first click: `Some((rank, relevant))` or `None`.
    pub fn sample<R: Rng + ?Sized>(&self, grades: &[u32], rng: &mut R) -> Option<(usize, bool)> {
        for (pos, &g) in grades.iter().enumerate() {
            let rank = pos + 1;
            if rng.random::<f64>() < self.examination(rank) && rng.random::<f64>() < self.attractiveness(g) {
                return Some((rank, g > 0));
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub quality: Vec<f64>,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub preference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldQuery {
    pub context: QueryContext,
    pub candidates: Vec<CandidateFeatures>,
    /// Ground-truth grade per candidate, aligned with `candidates`.
    pub grades: Vec<u32>,
}

impl WorldQuery {
    pub fn grade_of(&self, item: &ItemId) -> u32 {
        self.candidates
            .iter()
            .position(|c| &c.item == item)
            .map_or(0, |i| self.grades[i])
    }

    pub fn grades_of(&self, list: &ResultList) -> Vec<u32> {
        list.items.iter().map(|i| self.grade_of(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: Option<WorldConfig>,
    pub click_model: ClickModel,
    pub items: Vec<Item>,
    pub users: Vec<User>,
    pub queries: Vec<WorldQuery>,
    pub max_enumeration: usize,
    #[serde(skip)]
    query_index: HashMap<String, usize>,
    /// Query indices per user, for users with at least one query.
    #[serde(skip)]
    active_users: Vec<Vec<usize>>,
}

fn normal_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let root = Stream::root(config.seed);
    let d = config.feature_dim;

    let items: Vec<Item> = (0..config.n_items)
        .map(|i| {
            let mut rng = root.child("item").index(i as u64).rng();
            let quality = normal_vec(&mut rng, d);
            let kind = if rng.random::<f64>() < config.promo_share { "promo" } else { "regular" };
            let mut attributes = BTreeMap::new();
            attributes.insert("kind".to_string(), kind.to_string());
            Item {
                id: ItemId::new(format!("i{i:06}")),
                quality,
                attributes,
            }
        })
        .collect();

    let users: Vec<User> = (0..config.n_users)
        .map(|u| {
            let mut rng = root.child("user").index(u as u64).rng();
            User {
                id: format!("u{u:06}"),
                preference: normal_vec(&mut rng, d),
            }
        })
        .collect();

    let n_cand = config.n_candidates.min(config.n_items);
    let queries: Vec<WorldQuery> = (0..config.n_queries)
        .map(|j| {
            let mut rng = root.child("query").index(j as u64).rng();
            let user = &users[j % config.n_users];
            let intent: Vec<f64> = user
                .preference
                .iter()
                .map(|p| p + config.intent_noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let long = rng.random::<f64>() < config.long_query_share;

            let mut retrieval: Vec<(f64, usize)> = items
                .iter()
                .enumerate()
                .map(|(i, it)| (dot(&intent, &it.quality) + 0.5 * rng.sample::<f64, _>(StandardNormal), i))
                .collect();
            retrieval.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            retrieval.truncate(n_cand);

            let candidates: Vec<CandidateFeatures> = retrieval
                .iter()
                .map(|&(_, i)| CandidateFeatures {
                    item: items[i].id.clone(),
                    features: intent.iter().zip(&items[i].quality).map(|(a, b)| a * b).collect(),
                    attributes: items[i].attributes.clone(),
                })
                .collect();

            let mut utility: Vec<(f64, usize)> = retrieval
                .iter()
                .enumerate()
                .map(|(c, &(_, i))| (dot(&user.preference, &items[i].quality) + 0.5 * rng.sample::<f64, _>(StandardNormal), c))
                .collect();
            utility.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut grades = vec![0u32; candidates.len()];
            for (rank, &(_, c)) in utility.iter().take(config.relevant_per_query).enumerate() {
                grades[c] = if rank == 0 { 2 } else { 1 };
            }

            let mut attributes = BTreeMap::new();
            attributes.insert("length_class".to_string(), if long { "long" } else { "short" }.to_string());
            WorldQuery {
                context: QueryContext {
                    query_id: format!("q{j:07}"),
                    user_id: user.id.clone(),
                    query_text: format!("query {j}"),
                    timestamp: j as i64 * 1000,
                    attributes,
                },
                candidates,
                grades,
            }
        })
        .collect();

    let mut world = World {
        config: Some(config.clone()),
        click_model: config.click_model(),
        items,
        users,
        queries,
        max_enumeration: config.max_enumeration,
        query_index: HashMap::new(),
        active_users: Vec::new(),
    };
    world.build_indices()?;
    Ok(world)
}

impl World {
    /// Builds a world from hand-made queries (test fixtures, special surfaces).
    pub fn from_queries(click_model: ClickModel, queries: Vec<WorldQuery>) -> Result<World> {
        for (name, p) in [("p_rel", click_model.p_rel), ("p_irr", click_model.p_irr)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidWorld(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(click_model.examination_decay > 0.0 && click_model.examination_decay <= 1.0) {
            return Err(Error::InvalidWorld("examination_decay must lie in (0, 1]".into()));
        }
        let mut world = World {
            config: None,
            click_model,
            items: Vec::new(),
            users: Vec::new(),
            queries,
            max_enumeration: WorldConfig::default().max_enumeration,
            query_index: HashMap::new(),
            active_users: Vec::new(),
        };
        world.build_indices()?;
        Ok(world)
    }

    fn build_indices(&mut self) -> Result<()> {
        self.query_index.clear();
        let mut per_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, q) in self.queries.iter().enumerate() {
            if q.candidates.is_empty() || q.grades.len() != q.candidates.len() {
                return Err(Error::InvalidWorld(format!(
                    "query `{}` needs candidates with aligned grades",
                    q.context.query_id
                )));
            }
            if self.query_index.insert(q.context.query_id.clone(), i).is_some() {
                return Err(Error::InvalidWorld(format!("duplicate query `{}`", q.context.query_id)));
            }
            per_user.entry(q.context.user_id.as_str()).or_default().push(i);
        }
        if self.queries.is_empty() {
            return Err(Error::InvalidWorld("world has no queries".into()));
        }
        self.active_users = per_user.into_values().collect();
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.queries[0].candidates[0].features.len()
    }

    pub fn query(&self, query_id: &str) -> Option<&WorldQuery> {
        self.query_index.get(query_id).map(|&i| &self.queries[i])
    }

    pub fn n_active_users(&self) -> usize {
        self.active_users.len()
    }

    pub fn user_queries(&self, active_user: usize) -> &[usize] {
        &self.active_users[active_user]
    }

    /// Draws one query index from the traffic model.
    pub fn sample_query<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random_range(0..self.active_users.len());
        let qs = &self.active_users[u];
        qs[rng.random_range(0..qs.len())]
    }

    /// Ranked list per world query for `scorer`, in world query order.
    pub fn rank_all(&self, scorer: &Scorer, k: usize) -> Result<Vec<ResultList>> {
        self.queries.iter().map(|q| scorer.rank(&q.candidates, k)).collect()
    }

    /// Serves every world query, producing a complete counterfactual log.
    pub fn serve_all(&self, scorer: &Scorer, k: usize) -> Result<Vec<CounterfactualRecord>> {
        self.queries.iter().map(|q| serve(self, &q.context, scorer, k)).collect()
    }

    /// Serves every query once and samples interactions for each.
    pub fn simulate_log(
        &self,
        scorer: &Scorer,
        k: usize,
        stream: Stream,
    ) -> Result<(Vec<CounterfactualRecord>, Vec<Interaction>)> {
        let records = self.serve_all(scorer, k)?;
        let mut interactions = Vec::new();
        for (i, r) in records.iter().enumerate() {
            interactions.extend(interact(self, &r.context.query_id, &r.served_results, stream.index(i as u64)));
        }
        Ok((records, interactions))
    }
}

pub fn serve(world: &World, context: &QueryContext, scorer: &Scorer, k: usize) -> Result<CounterfactualRecord> {
    let q = world
        .query(&context.query_id)
        .ok_or_else(|| Error::InvalidValue(format!("unknown query `{}`", context.query_id)))?;
    let served_results = scorer.rank(&q.candidates, k)?;
    Ok(CounterfactualRecord {
        context: q.context.clone(),
        candidates: q.candidates.clone(),
        served_variant: scorer.variant.clone(),
        served_results,
    })
}

/// Samples the session for one displayed list (served or interleaved).
pub fn interact(world: &World, query_id: &str, list: &ResultList, stream: Stream) -> Vec<Interaction> {
    let Some(q) = world.query(query_id) else {
        return Vec::new();
    };
    let grades = q.grades_of(list);
    let mut rng = stream.rng();
    match world.click_model.sample(&grades, &mut rng) {
        Some((rank, success)) => vec![Interaction {
            query_id: query_id.to_string(),
            item: list.items[rank - 1].clone(),
            rank,
            action: Action::Click,
            success,
        }],
        None => Vec::new(),
    }
}

fn expected_rate(world: &World, scorer: &Scorer, k: usize, model: &ClickModel) -> Result<f64> {
    let needed = world.queries.len().saturating_mul(k);
    if needed > world.max_enumeration {
        return Err(Error::EnumerationBound {
            needed,
            limit: world.max_enumeration,
        });
    }
    let lists = world.rank_all(scorer, k)?;
    let per_query: Vec<f64> = world
        .queries
        .iter()
        .zip(&lists)
        .map(|(q, l)| model.success_probability(&q.grades_of(l)))
        .collect();
    let n_users = world.active_users.len() as f64;
    Ok(world
        .active_users
        .iter()
        .map(|qs| qs.iter().map(|&i| per_query[i]).sum::<f64>() / qs.len() as f64)
        .sum::<f64>()
        / n_users)
}

/// Exact expected per-query success probability under the traffic model.
pub fn true_success_rate(world: &World, scorer: &Scorer, k: usize) -> Result<f64> {
    expected_rate(world, scorer, k, &world.click_model)
}

/// Expected success if every displayed rank were examined.
pub fn relevance_conditioned_success_rate(world: &World, scorer: &Scorer, k: usize) -> Result<f64> {
    let full = ClickModel {
        examination_decay: 1.0,
        ..world.click_model
    };
    expected_rate(world, scorer, k, &full)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            n_items: 60,
            n_users: 20,
            n_queries: 100,
            ..Default::default()
        }
    }

    pub(crate) fn one_query(grades: &[u32], model: ClickModel) -> World {
        let candidates = (0..grades.len())
            .map(|i| CandidateFeatures::new(format!("c{i}"), vec![-(i as f64)]))
            .collect();
        let q = WorldQuery {
            context: QueryContext {
                query_id: "q".into(),
                user_id: "u".into(),
                query_text: String::new(),
                timestamp: 0,
                attributes: BTreeMap::new(),
            },
            candidates,
            grades: grades.to_vec(),
        };
        World::from_queries(model, vec![q]).unwrap()
    }

    #[test]
    fn same_seed_same_world() {
        let a = serde_json::to_string(&generate_world(&small()).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_world(&small()).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = WorldConfig { seed: 2, ..small() };
        let c = generate_world(&other).unwrap();
        assert_ne!(c.items, generate_world(&small()).unwrap().items);
    }

    #[test]
    fn single_item_world() {
        let w = generate_world(&WorldConfig { n_items: 1, ..small() }).unwrap();
        let s = Scorer::new("s", vec![0.3, -1.0, 2.0, 0.0]);
        for r in w.serve_all(&s, 10).unwrap() {
            assert_eq!(r.served_results.items, vec![ItemId::new("i000000")]);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_world(&WorldConfig { n_users: 0, ..small() }).is_err());
        assert!(generate_world(&WorldConfig { examination_decay: 0.0, ..small() }).is_err());
        assert!(generate_world(&WorldConfig { nonrelevance_click_prob: 0.9, ..small() }).is_err());
    }

    #[test]
    fn served_logs_reconstruct_exactly() {
        let w = generate_world(&small()).unwrap();
        let s = Scorer::new("prod", vec![1.0, 0.5, 1.0, 0.2]);
        let recs = w.serve_all(&s, 10).unwrap();
        let q = crate::counterfactual::quality_check(&recs, &s).unwrap();
        assert_eq!(q.exact_match_rate, 1.0);
    }

    #[test]
    fn absent_attribute_boost_is_noop() {
        use crate::counterfactual::BoostRule;
        let w = generate_world(&small()).unwrap();
        let s = Scorer::new("prod", vec![1.0; 4]);
        let t = s.clone().with_boost(BoostRule::new("color", "red", 3.0));
        assert_eq!(w.rank_all(&s, 10).unwrap(), w.rank_all(&t, 10).unwrap());
    }

    #[test]
    fn preference_scorer_beats_zero_scorer() {
        let w = generate_world(&small()).unwrap();
        let good = true_success_rate(&w, &Scorer::new("g", vec![1.0; 4]), 10).unwrap();
        let zero = true_success_rate(&w, &Scorer::new("z", vec![0.0; 4]), 10).unwrap();
        assert!(good > zero, "{good} vs {zero}");
    }

    #[test]
    fn degenerate_click_probabilities() {
        let m = ClickModel { examination_decay: 1.0, p_rel: 1.0, p_irr: 0.0 };
        let w = one_query(&[1, 0, 0], m);
        let list = w.rank_all(&Scorer::new("s", vec![1.0]), 3).unwrap().remove(0);
        for i in 0..50 {
            let out = interact(&w, "q", &list, Stream::root(i));
            assert_eq!(out.len(), 1);
            assert!(out[0].success && out[0].rank == 1);
        }
        let silent = one_query(&[1, 0], ClickModel { examination_decay: 1.0, p_rel: 0.0, p_irr: 0.0 });
        let list = silent.rank_all(&Scorer::new("s", vec![1.0]), 2).unwrap().remove(0);
        assert!((0..200).all(|i| interact(&silent, "q", &list, Stream::root(i)).is_empty()));
    }

    #[test]
    fn pbm_monte_carlo_matches_closed_form() {
        let m = ClickModel { examination_decay: 0.7, p_rel: 1.0, p_irr: 0.0 };
        let w = one_query(&[0, 0, 1, 0], m);
        let list = w.rank_all(&Scorer::new("s", vec![1.0]), 4).unwrap().remove(0);
        let n = 100_000;
        let s = Stream::root(11);
        let clicks = (0..n).filter(|&i| !interact(&w, "q", &list, s.index(i)).is_empty()).count();
        assert!((clicks as f64 / n as f64 - 0.49).abs() <= 0.01);
    }

    #[test]
    fn enumerated_success_rates() {
        let s = Scorer::new("s", vec![1.0]);
        let zero = one_query(&[1, 1], ClickModel { examination_decay: 0.5, p_rel: 0.0, p_irr: 0.0 });
        assert_eq!(true_success_rate(&zero, &s, 2).unwrap(), 0.0);
        let top = one_query(&[1, 0], ClickModel { examination_decay: 0.3, p_rel: 1.0, p_irr: 0.4 });
        assert_eq!(true_success_rate(&top, &s, 2).unwrap(), 1.0);
        let second = one_query(&[0, 1], ClickModel { examination_decay: 0.7, p_rel: 1.0, p_irr: 0.0 });
        assert!((true_success_rate(&second, &s, 2).unwrap() - 0.7).abs() < 1e-15);
        let mut capped = second.clone();
        capped.max_enumeration = 1;
        assert!(matches!(true_success_rate(&capped, &s, 2), Err(Error::EnumerationBound { .. })));
    }
}

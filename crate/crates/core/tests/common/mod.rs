//! Hand-built simulator worlds shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use funnelkit::counterfactual::Scorer;
use funnelkit::simworld::{ClickModel, World, WorldQuery};
use funnelkit::types::{CandidateFeatures, QueryContext};

pub fn context(query_id: &str, user_id: &str) -> QueryContext {
    QueryContext {
        query_id: query_id.into(),
        user_id: user_id.into(),
        query_text: format!("text {query_id}"),
        timestamp: 0,
        attributes: BTreeMap::new(),
    }
}

pub fn query(query_id: &str, user_id: &str, candidates: Vec<CandidateFeatures>, grades: Vec<u32>) -> WorldQuery {
    WorldQuery { context: context(query_id, user_id), candidates, grades }
}

pub fn model(gamma: f64, p_rel: f64, p_irr: f64) -> ClickModel {
    ClickModel { examination_decay: gamma, p_rel, p_irr }
}

/// One query with a relevant item `r` (feature axis 0) and an irrelevant
/// item `d` (axis 1). Scorer `(1, 0)` shows `r` first and succeeds with
/// `p_rel`; scorer `(0, 1)` shows it second and succeeds with `p_rel·γ`.
pub fn two_arm_world(gamma: f64, p_rel: f64) -> (World, Scorer, Scorer) {
    let q = query(
        "q0",
        "u0",
        vec![CandidateFeatures::new("r", vec![1.0, 0.0]), CandidateFeatures::new("d", vec![0.0, 1.0])],
        vec![1, 0],
    );
    let world = World::from_queries(model(gamma, p_rel, 0.0), vec![q]).unwrap();
    (world, Scorer::new("good", vec![1.0, 0.0]), Scorer::new("weak", vec![0.0, 1.0]))
}

/// Each query holds a relevant item `r` at the origin and two distractors
/// scoring `c1 - θ` and `θ - c2` under weights `(1, θ)`; `(c1, c2)` runs over
/// an `m × m` midpoint grid on `[0, 0.6]²`. At k = 1 the success rate is
/// `p_rel · P(c1 < θ < c2)`, a concave quadratic in θ peaking at 0.3.
pub fn concave_world(m: usize, p_rel: f64) -> World {
    let mut queries = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let c1 = 0.6 * (i as f64 + 0.5) / m as f64;
            let c2 = 0.6 * (j as f64 + 0.5) / m as f64;
            let n = i * m + j;
            queries.push(query(
                &format!("q{n:05}"),
                &format!("u{n:05}"),
                vec![
                    CandidateFeatures::new("r", vec![0.0, 0.0]),
                    CandidateFeatures::new("d1", vec![c1, -1.0]),
                    CandidateFeatures::new("d2", vec![-c2, 1.0]),
                ],
                vec![1, 0, 0],
            ));
        }
    }
    World::from_queries(model(1.0, p_rel, 0.0), queries).unwrap()
}

pub fn concave_scorer(theta: f64) -> Scorer {
    Scorer::new("concave", vec![1.0, theta])
}

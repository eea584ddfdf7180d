//! Bernoulli bandit over ranking variants, success-rate reward.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::counterfactual::Scorer;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::simworld::{true_success_rate, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub alpha: f64,
    pub beta: f64,
    pub pulls: u64,
    pub successes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub arms: Vec<ArmState>,
    pub round: u64,
}

impl BanditState {
    pub fn new(n_arms: usize, prior_alpha: f64, prior_beta: f64) -> Result<Self> {
        if n_arms == 0 {
            return Err(Error::InvalidValue("bandit needs at least one arm".into()));
        }
        if !(prior_alpha > 0.0 && prior_beta > 0.0) {
            return Err(Error::InvalidValue(format!(
                "Beta prior parameters must be positive, got ({prior_alpha}, {prior_beta})"
            )));
        }
        let arm = ArmState { alpha: prior_alpha, beta: prior_beta, pulls: 0, successes: 0 };
        Ok(BanditState { prior_alpha, prior_beta, arms: vec![arm; n_arms], round: 0 })
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn posterior_means(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.alpha / (a.alpha + a.beta)).collect()
    }
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn thompson_select<R: Rng + ?Sized>(state: &BanditState, rng: &mut R) -> usize {
    argmax(state.arms.iter().map(|a| {
        Beta::new(a.alpha, a.beta)
            .expect("positive Beta parameters")
            .sample(rng)
    }))
}

/// With probability `epsilon` a uniform arm, otherwise the best empirical mean
/// (unpulled arms first).
pub fn epsilon_greedy_select<R: Rng + ?Sized>(state: &BanditState, epsilon: f64, rng: &mut R) -> usize {
    if rng.random_bool(epsilon.clamp(0.0, 1.0)) {
        return rng.random_range(0..state.n_arms());
    }
    argmax(state.arms.iter().map(|a| {
        if a.pulls == 0 {
            f64::INFINITY
        } else {
            a.successes as f64 / a.pulls as f64
        }
    }))
}

pub fn bandit_update(state: &mut BanditState, arm: usize, reward: bool) -> Result<()> {
    let n = state.n_arms();
    let a = state
        .arms
        .get_mut(arm)
        .ok_or_else(|| Error::InvalidValue(format!("arm {arm} out of range for {n} arms")))?;
    a.pulls += 1;
    if reward {
        a.successes += 1;
        a.alpha += 1.0;
    } else {
        a.beta += 1.0;
    }
    state.round += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Strategy {
    Thompson,
    EpsilonGreedy { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    pub strategy: Strategy,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub k: usize,
    /// Number of trajectory checkpoints kept.
    pub checkpoints: usize,
}

impl Default for BanditConfig {
    fn default() -> Self {
        BanditConfig {
            strategy: Strategy::Thompson,
            prior_alpha: 1.0,
            prior_beta: 1.0,
            k: 10,
            checkpoints: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditCheckpoint {
    pub round: u64,
    pub pulls: Vec<u64>,
    pub successes: Vec<u64>,
    pub cumulative_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditRun {
    pub arms: Vec<String>,
    pub true_rates: Vec<f64>,
    pub best_arm: usize,
    /// Arm chosen in each round.
    pub choices: Vec<u32>,
    /// Expected regret `best rate - chosen rate`, cumulated per round.
    pub cumulative_regret: Vec<f64>,
    pub checkpoints: Vec<BanditCheckpoint>,
    pub final_state: BanditState,
}

impl BanditRun {
    /// Share of pulls going to `arm` within rounds `[from, to)`.
    pub fn share(&self, arm: usize, from: usize, to: usize) -> f64 {
        let slice = &self.choices[from..to];
        slice.iter().filter(|&&c| c as usize == arm).count() as f64 / slice.len() as f64
    }

    pub fn regret_at(&self, round: usize) -> f64 {
        self.cumulative_regret[round - 1]
    }
}

pub fn run_bandit(
    world: &World,
    arms: &[Scorer],
    horizon: usize,
    config: &BanditConfig,
    stream: Stream,
) -> Result<BanditRun> {
    if horizon == 0 {
        return Err(Error::InvalidValue("horizon must be >= 1".into()));
    }
    let mut state = BanditState::new(arms.len(), config.prior_alpha, config.prior_beta)?;
    let true_rates = arms
        .iter()
        .map(|s| true_success_rate(world, s, config.k))
        .collect::<Result<Vec<_>>>()?;
    let best_arm = argmax(true_rates.iter().copied());
    let grades: Vec<Vec<Vec<u32>>> = arms
        .iter()
        .map(|s| {
            let lists = world.rank_all(s, config.k)?;
            Ok(world.queries.iter().zip(&lists).map(|(q, l)| q.grades_of(l)).collect())
        })
        .collect::<Result<_>>()?;

    let mut select_rng = stream.child("select").rng();
    let mut world_rng = stream.child("world").rng();
    let every = (horizon / config.checkpoints.max(1)).max(1);
    let mut choices = Vec::with_capacity(horizon);
    let mut cumulative_regret = Vec::with_capacity(horizon);
    let mut checkpoints = Vec::new();
    let mut regret = 0.0;
    for t in 1..=horizon {
        let arm = match config.strategy {
            Strategy::Thompson => thompson_select(&state, &mut select_rng),
            Strategy::EpsilonGreedy { epsilon } => epsilon_greedy_select(&state, epsilon, &mut select_rng),
        };
        let q = world.sample_query(&mut world_rng);
        let reward = matches!(world.click_model.sample(&grades[arm][q], &mut world_rng), Some((_, true)));
        bandit_update(&mut state, arm, reward)?;
        regret += true_rates[best_arm] - true_rates[arm];
        choices.push(arm as u32);
        cumulative_regret.push(regret);
        if t % every == 0 || t == horizon {
            checkpoints.push(BanditCheckpoint {
                round: t as u64,
                pulls: state.arms.iter().map(|a| a.pulls).collect(),
                successes: state.arms.iter().map(|a| a.successes).collect(),
                cumulative_regret: regret,
            });
        }
    }
    Ok(BanditRun {
        arms: arms.iter().map(|s| s.variant.name.clone()).collect(),
        true_rates,
        best_arm,
        choices,
        cumulative_regret,
        checkpoints,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_arm() {
        let s = BanditState::new(1, 1.0, 1.0).unwrap();
        let mut rng = Stream::root(1).rng();
        assert!((0..100).all(|_| thompson_select(&s, &mut rng) == 0));
    }

    #[test]
    fn dominant_arm() {
        let mut s = BanditState::new(2, 1.0, 1.0).unwrap();
        s.arms[0].alpha = 1000.0;
        s.arms[1].beta = 1000.0;
        let mut rng = Stream::root(2).rng();
        let a = (0..1000).filter(|_| thompson_select(&s, &mut rng) == 0).count();
        assert!(a >= 999);
    }

    #[test]
    fn fresh_arms_uniform() {
        let s = BanditState::new(4, 1.0, 1.0).unwrap();
        let mut rng = Stream::root(3).rng();
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[thompson_select(&s, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e4 - 0.25).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn conjugate_update() {
        let mut s = BanditState::new(2, 1.0, 1.0).unwrap();
        for r in [true, true, false, true] {
            bandit_update(&mut s, 1, r).unwrap();
        }
        assert_eq!((s.arms[1].alpha, s.arms[1].beta), (4.0, 2.0));
        bandit_update(&mut s, 0, false).unwrap();
        assert_eq!(s.arms[0].beta, 2.0);
        for a in &s.arms {
            assert_eq!(a.alpha, s.prior_alpha + a.successes as f64);
            assert_eq!(a.beta, s.prior_beta + (a.pulls - a.successes) as f64);
        }
        assert!(bandit_update(&mut s, 2, true).is_err());
    }

    #[test]
    fn epsilon_greedy_exploits() {
        let mut s = BanditState::new(2, 1.0, 1.0).unwrap();
        bandit_update(&mut s, 0, false).unwrap();
        bandit_update(&mut s, 1, true).unwrap();
        let mut rng = Stream::root(4).rng();
        let picks = (0..1000).filter(|_| epsilon_greedy_select(&s, 0.1, &mut rng) == 1).count();
        assert!(picks > 900);
    }
}

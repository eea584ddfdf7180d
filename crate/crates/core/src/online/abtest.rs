//! Simulated A/B test against a [`World`].
//!
//! Units arrive in index order. Each unit is a randomly drawn world user,
//! bucketed by [`assign`], who first issues `pre_queries_per_user` queries
//! under control (the regression-adjustment covariate) and then
//! `queries_per_user` queries under its assigned arm.
//!
//! Guardrail metrics are monitored with a confidence sequence over paired
//! per-unit differences (k-th treatment unit minus k-th control unit). A
//! harmful crossing aborts the experiment at that point; fixed-horizon
//! estimates are then computed on the units seen so far and flagged
//! incomplete. Shipping statistics always come from the fixed-horizon Welch
//! analysis, never from the sequential estimate.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assign::{assign, validate_ratios};
use super::cuped::cuped_adjust;
use super::exposure::{filter_indices, ExposureLevel};
use super::sequential::{ConfidenceSequence, SequentialTrajectory, TrajectoryPoint};
use super::welch::welch_t;
use crate::counterfactual::Scorer;
use crate::error::{Error, Result};
use crate::gates::{evaluate_gates, Criterion, GateOutcome, StatMap};
use crate::rng::Stream;
use crate::simworld::World;

pub const METRICS: [&str; 2] = ["success_rate", "click_rate"];
pub const PRE_SUCCESS_RATE: &str = "pre_success_rate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbConfig {
    pub n_users: usize,
    pub queries_per_user: usize,
    pub k: usize,
    pub metrics: Vec<String>,
    pub guardrails: Vec<String>,
    pub filter: ExposureLevel,
    pub cuped_covariate: Option<String>,
    pub pre_queries_per_user: usize,
    pub alpha: f64,
    /// Mixture parameter; defaults to the expected information at 10% of the horizon.
    pub rho_mix: Option<f64>,
    pub salt: String,
    pub ratios: Vec<f64>,
    /// Units required before the fixed-horizon analysis counts as complete.
    pub min_units: usize,
    pub abort_on_guardrail: bool,
    pub trajectory_points: usize,
}

impl Default for AbConfig {
    fn default() -> Self {
        AbConfig {
            n_users: 10_000,
            queries_per_user: 3,
            k: 10,
            metrics: vec!["success_rate".into()],
            guardrails: vec!["click_rate".into()],
            filter: ExposureLevel::None,
            cuped_covariate: None,
            pre_queries_per_user: 3,
            alpha: 0.05,
            rho_mix: None,
            salt: "abtest".into(),
            ratios: vec![0.5, 0.5],
            min_units: 0,
            abort_on_guardrail: true,
            trajectory_points: 200,
        }
    }
}

impl AbConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidValue(m));
        if self.n_users < 4 {
            return bad(format!("n_users must be >= 4, got {}", self.n_users));
        }
        if self.queries_per_user == 0 || self.k == 0 {
            return bad("queries_per_user and k must be >= 1".into());
        }
        for m in self.metrics.iter().chain(&self.guardrails) {
            if !METRICS.contains(&m.as_str()) {
                return bad(format!("unknown metric `{m}` (expected one of {METRICS:?})"));
            }
        }
        if let Some(c) = &self.cuped_covariate {
            if c != PRE_SUCCESS_RATE {
                return bad(format!("unknown covariate `{c}` (expected `{PRE_SUCCESS_RATE}`)"));
            }
            if self.pre_queries_per_user == 0 {
                return bad("cuped_covariate needs pre_queries_per_user >= 1".into());
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        validate_ratios(2, &self.ratios)
    }

    pub fn rho_mix_or_default(&self) -> f64 {
        self.rho_mix
            .unwrap_or_else(|| 0.1 * (self.n_users as f64 / 2.0) * 0.25)
            .max(1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FixedWelch,
    CupedWelch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    /// Treatment minus control, on the analysed population.
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    /// Estimate and error rescaled by the exposure rate to the whole population.
    pub ate_scaled_estimate: f64,
    pub ate_scaled_std_error: f64,
    pub control_mean: f64,
    pub treatment_mean: f64,
    pub cuped_theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub metric: String,
    pub at_pair: usize,
    pub at_unit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: Method,
    pub exposure_filter: ExposureLevel,
    pub exposure_rate: f64,
    /// Query-level rows are analysed as independent observations.
    pub independence_caveat: bool,
    pub n_control: usize,
    pub n_treatment: usize,
    pub units_enrolled: usize,
    pub horizon: usize,
    pub stopped_early: Option<EarlyStop>,
    pub complete: bool,
    pub metrics: BTreeMap<String, MetricEstimate>,
    pub sequential: BTreeMap<String, SequentialTrajectory>,
    pub gates: Vec<GateOutcome>,
    pub notes: Vec<String>,
}

impl ExperimentResult {
    pub fn statistics(&self) -> StatMap {
        let mut out = StatMap::new();
        for (name, m) in &self.metrics {
            for (field, v) in [
                ("estimate", m.estimate),
                ("std_error", m.std_error),
                ("ci_low", m.ci_low),
                ("ci_high", m.ci_high),
                ("p_value", m.p_value),
                ("ate_scaled_estimate", m.ate_scaled_estimate),
                ("ate_scaled_std_error", m.ate_scaled_std_error),
                ("control_mean", m.control_mean),
                ("treatment_mean", m.treatment_mean),
            ] {
                out.insert(format!("metrics.{name}.{field}"), Some(v));
            }
        }
        for (name, tr) in &self.sequential {
            out.insert(format!("guardrail.{name}.harm"), Some(f64::from(u8::from(tr.harm))));
            out.insert(
                format!("guardrail.{name}.crossed"),
                Some(f64::from(u8::from(tr.first_crossing.is_some()))),
            );
            out.insert(format!("guardrail.{name}.crossed_at"), tr.first_crossing.map(|t| t as f64));
        }
        out.insert("exposure_rate".into(), Some(self.exposure_rate));
        out.insert("n_control".into(), Some(self.n_control as f64));
        out.insert("n_treatment".into(), Some(self.n_treatment as f64));
        out.insert("stopped_early".into(), Some(f64::from(u8::from(self.stopped_early.is_some()))));
        out.insert("complete".into(), Some(f64::from(u8::from(self.complete))));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOutcome {
    pub query: u32,
    pub success: bool,
    pub click: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitOutcome {
    pub arm: usize,
    /// Pre-period success rate, NaN without a pre-period.
    pub pre: f64,
    pub queries: Vec<QueryOutcome>,
}

impl UnitOutcome {
    fn metric_mean(&self, metric: &str) -> f64 {
        let n = self.queries.len() as f64;
        self.queries.iter().map(|q| metric_value(q, metric)).sum::<f64>() / n
    }
}

fn metric_value(q: &QueryOutcome, metric: &str) -> f64 {
    let hit = match metric {
        "click_rate" => q.click,
        _ => q.success,
    };
    f64::from(u8::from(hit))
}

/// Precomputed per-query display grades for both arms.
pub struct AbEngine<'w> {
    world: &'w World,
    grades: [Vec<Vec<u32>>; 2],
    exposed: Vec<bool>,
}

impl<'w> AbEngine<'w> {
    pub fn new(world: &'w World, control: &Scorer, treatment: &Scorer, k: usize) -> Result<Self> {
        let lists_c = world.rank_all(control, k)?;
        let lists_t = world.rank_all(treatment, k)?;
        let exposed = lists_c.iter().zip(&lists_t).map(|(a, b)| a.items != b.items).collect();
        let grades_of = |lists: &[crate::types::ResultList]| {
            world.queries.iter().zip(lists).map(|(q, l)| q.grades_of(l)).collect::<Vec<_>>()
        };
        Ok(AbEngine {
            world,
            grades: [grades_of(&lists_c), grades_of(&lists_t)],
            exposed,
        })
    }

    /// Share of world queries whose results differ between arms.
    pub fn world_exposure_rate(&self) -> f64 {
        self.exposed.iter().filter(|&&e| e).count() as f64 / self.exposed.len() as f64
    }

    pub fn simulate_units(&self, cfg: &AbConfig, stream: Stream) -> Result<Vec<UnitOutcome>> {
        cfg.validate()?;
        let model = self.world.click_model;
        let n_active = self.world.n_active_users();
        let units = (0..cfg.n_users)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream.child("unit").index(i as u64).rng();
                let arm = assign(&format!("unit{i:08}"), &cfg.salt, 2, &cfg.ratios)?;
                let user = rng.random_range(0..n_active);
                let qs = self.world.user_queries(user);
                let mut pre_hits = 0u32;
                for _ in 0..cfg.pre_queries_per_user {
                    let q = qs[rng.random_range(0..qs.len())];
                    if let Some((_, true)) = model.sample(&self.grades[0][q], &mut rng) {
                        pre_hits += 1;
                    }
                }
                let pre = if cfg.pre_queries_per_user > 0 {
                    pre_hits as f64 / cfg.pre_queries_per_user as f64
                } else {
                    f64::NAN
                };
                let queries = (0..cfg.queries_per_user)
                    .map(|_| {
                        let q = qs[rng.random_range(0..qs.len())];
                        let click = model.sample(&self.grades[arm][q], &mut rng);
                        QueryOutcome {
                            query: q as u32,
                            success: matches!(click, Some((_, true))),
                            click: click.is_some(),
                        }
                    })
                    .collect();
                Ok(UnitOutcome { arm, pre, queries })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(units)
    }

    pub fn run(&self, cfg: &AbConfig, stream: Stream, criteria: &[Criterion]) -> Result<ExperimentResult> {
        let units = self.simulate_units(cfg, stream)?;
        self.analyze(&units, cfg, criteria)
    }

    pub fn analyze(&self, units: &[UnitOutcome], cfg: &AbConfig, criteria: &[Criterion]) -> Result<ExperimentResult> {
        cfg.validate()?;
        let horizon = units.len();
        let rho = cfg.rho_mix_or_default();
        let mut sequential = BTreeMap::new();
        let mut stop: Option<EarlyStop> = None;
        for g in &cfg.guardrails {
            let (traj, pair_units) = monitor(units, g, cfg.alpha, rho, cfg.trajectory_points)?;
            if cfg.abort_on_guardrail && traj.harm {
                let at_pair = traj.first_crossing.expect("harm implies crossing");
                let at_unit = pair_units[at_pair - 1];
                if stop.as_ref().is_none_or(|s| at_unit < s.at_unit) {
                    stop = Some(EarlyStop { metric: g.clone(), at_pair, at_unit });
                }
            }
            sequential.insert(g.clone(), traj);
        }
        let enrolled = stop.as_ref().map_or(horizon, |s| s.at_unit + 1);
        let units = &units[..enrolled];
        if stop.is_some() {
            // monitoring ends with the experiment
            for g in &cfg.guardrails {
                let (traj, _) = monitor(units, g, cfg.alpha, rho, cfg.trajectory_points)?;
                sequential.insert(g.clone(), traj);
            }
        }

        // one row per (unit, query)
        let mut row_unit = Vec::new();
        let mut row_exposed = Vec::new();
        for (u, unit) in units.iter().enumerate() {
            for q in &unit.queries {
                row_unit.push(u);
                row_exposed.push(self.exposed[q.query as usize]);
            }
        }
        let (kept, exposure_rate) = filter_indices(&row_unit, &row_exposed, cfg.filter);
        let row_query: Vec<&QueryOutcome> = units.iter().flat_map(|u| u.queries.iter()).collect();

        let use_cuped = cfg.cuped_covariate.is_some();
        let mut metrics = BTreeMap::new();
        let mut n_arm = [0usize; 2];
        let mut notes = Vec::new();
        for name in &cfg.metrics {
            // (arm, value, covariate) observations
            let mut obs: Vec<(usize, f64, f64)> = Vec::new();
            match cfg.filter {
                ExposureLevel::QueryLevel => {
                    for &r in &kept {
                        let unit = &units[row_unit[r]];
                        obs.push((unit.arm, metric_value(row_query[r], name), unit.pre));
                    }
                }
                _ => {
                    let mut last = usize::MAX;
                    for &r in &kept {
                        let u = row_unit[r];
                        if u != last {
                            let unit = &units[u];
                            obs.push((unit.arm, unit.metric_mean(name), unit.pre));
                            last = u;
                        }
                    }
                }
            }
            let (values, theta) = if use_cuped {
                let y: Vec<f64> = obs.iter().map(|o| o.1).collect();
                let x: Vec<f64> = obs.iter().map(|o| o.2).collect();
                let adj = cuped_adjust(&y, &x)?;
                if adj.degenerate_covariate {
                    notes.push(format!("{name}: covariate has zero variance, left unadjusted"));
                }
                (adj.adjusted, Some(adj.theta))
            } else {
                (obs.iter().map(|o| o.1).collect(), None)
            };
            let mut by_arm: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for (o, v) in obs.iter().zip(values) {
                by_arm[o.0].push(v);
            }
            n_arm = [by_arm[0].len(), by_arm[1].len()];
            let w = welch_t(&by_arm[0], &by_arm[1], cfg.alpha)
                .map_err(|e| Error::InvalidValue(format!("metric `{name}`: {e}")))?;
            metrics.insert(
                name.clone(),
                MetricEstimate {
                    estimate: w.estimate,
                    std_error: w.std_error,
                    ci_low: w.ci_low,
                    ci_high: w.ci_high,
                    p_value: w.p_value,
                    ate_scaled_estimate: w.estimate * exposure_rate,
                    ate_scaled_std_error: w.std_error * exposure_rate,
                    control_mean: crate::stats::mean(&by_arm[0]),
                    treatment_mean: crate::stats::mean(&by_arm[1]),
                    cuped_theta: theta,
                },
            );
        }
        if cfg.filter == ExposureLevel::QueryLevel {
            notes.push("query-level filter: rows treated as independent queries".into());
        }
        if cfg.filter != ExposureLevel::None {
            notes.push(format!(
                "estimates are effects among exposed ({:.4} of {}); multiply by the exposure rate for the population effect",
                exposure_rate,
                if cfg.filter == ExposureLevel::QueryLevel { "queries" } else { "users" }
            ));
        }
        if let Some(s) = &stop {
            notes.push(format!(
                "aborted: guardrail `{}` crossed into harm at pair {} (unit {} of {horizon})",
                s.metric, s.at_pair, s.at_unit + 1
            ));
        }

        let mut result = ExperimentResult {
            method: if use_cuped { Method::CupedWelch } else { Method::FixedWelch },
            exposure_filter: cfg.filter,
            exposure_rate,
            independence_caveat: cfg.filter == ExposureLevel::QueryLevel,
            n_control: n_arm[0],
            n_treatment: n_arm[1],
            units_enrolled: enrolled,
            horizon,
            complete: stop.is_none() && enrolled >= cfg.min_units,
            stopped_early: stop,
            metrics,
            sequential,
            gates: Vec::new(),
            notes,
        };
        result.gates = evaluate_gates(&result.statistics(), criteria)?;
        Ok(result)
    }
}

/// Confidence sequence over paired unit differences for one metric; also
/// returns, per pair, the arrival index at which the pair completed.
fn monitor(
    units: &[UnitOutcome],
    metric: &str,
    alpha: f64,
    rho: f64,
    points: usize,
) -> Result<(SequentialTrajectory, Vec<usize>)> {
    let mut queues: [Vec<(usize, f64)>; 2] = [Vec::new(), Vec::new()];
    for (i, u) in units.iter().enumerate() {
        queues[u.arm].push((i, u.metric_mean(metric)));
    }
    let n_pairs = queues[0].len().min(queues[1].len());
    let every = (n_pairs / points.max(1)).max(1);
    let mut cs = ConfidenceSequence::new(alpha, rho)?;
    let mut recorded: Vec<TrajectoryPoint> = Vec::new();
    let mut pair_units = Vec::with_capacity(n_pairs);
    for j in 0..n_pairs {
        let (ic, c) = queues[0][j];
        let (it, t) = queues[1][j];
        pair_units.push(ic.max(it));
        let was = cs.crossed();
        let p = cs.push(t - c);
        if (j + 1) % every == 0 || j + 1 == n_pairs || (p.crossed && !was) {
            recorded.push(p);
        }
    }
    Ok((
        SequentialTrajectory {
            alpha,
            rho_mix: rho,
            points: recorded,
            first_crossing: cs.first_crossing(),
            harm: cs.harm(),
            n: n_pairs,
        },
        pair_units,
    ))
}

pub fn run_abtest(
    world: &World,
    control: &Scorer,
    treatment: &Scorer,
    cfg: &AbConfig,
    stream: Stream,
    criteria: &[Criterion],
) -> Result<ExperimentResult> {
    AbEngine::new(world, control, treatment, cfg.k)?.run(cfg, stream, criteria)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{Comparator, CriterionKind};
    use crate::simworld::{generate_world, true_success_rate, WorldConfig};

    fn world() -> World {
        generate_world(&WorldConfig { n_items: 200, n_users: 300, n_queries: 900, ..Default::default() }).unwrap()
    }

    #[test]
    fn aa_estimate_near_zero() {
        let w = world();
        let s = Scorer::new("c", vec![1.0, 0.5, 0.2, 0.0]);
        let cfg = AbConfig { n_users: 4000, ..Default::default() };
        let r = run_abtest(&w, &s, &s, &cfg, Stream::root(1), &[]).unwrap();
        let m = r.metrics["success_rate"];
        assert!(m.ci_low <= m.estimate && m.estimate <= m.ci_high);
        assert!(m.estimate.abs() < 4.0 * m.std_error);
        assert_eq!(r.exposure_rate, 1.0);
        assert!(r.complete && r.stopped_early.is_none());
    }

    #[test]
    fn broken_scorer_trips_guardrail() {
        let w = world();
        let good = Scorer::new("c", vec![1.0; 4]);
        let broken = Scorer::new("t", vec![-1.0; 4]);
        let cfg = AbConfig { n_users: 6000, ..Default::default() };
        let crit = Criterion::new("no-harm", "guardrail.click_rate.harm", Comparator::Le, 0.0, CriterionKind::Guardrail);
        let r = run_abtest(&w, &good, &broken, &cfg, Stream::root(2), &[crit]).unwrap();
        let stop = r.stopped_early.as_ref().expect("guardrail abort");
        assert!(stop.at_unit + 1 < cfg.n_users);
        assert!(!r.gates[0].passed);
        assert!(!r.complete);
        assert!(true_success_rate(&w, &broken, 10).unwrap() < true_success_rate(&w, &good, 10).unwrap());
    }

    #[test]
    fn user_level_keeps_more_rows_than_query_level() {
        let w = world();
        let c = Scorer::new("c", vec![1.0; 4]);
        let t = c.clone().with_boost(crate::counterfactual::BoostRule::new("kind", "promo", 0.8));
        let engine = AbEngine::new(&w, &c, &t, 10).unwrap();
        let rate = engine.world_exposure_rate();
        assert!(rate > 0.05 && rate < 0.95, "{rate}");
        let base = AbConfig { n_users: 3000, guardrails: vec![], ..Default::default() };
        let units = engine.simulate_units(&base, Stream::root(3)).unwrap();
        let q = engine.analyze(&units, &AbConfig { filter: ExposureLevel::QueryLevel, ..base.clone() }, &[]).unwrap();
        let u = engine.analyze(&units, &AbConfig { filter: ExposureLevel::UserLevel, ..base.clone() }, &[]).unwrap();
        assert!(q.independence_caveat && !u.independence_caveat);
        let total_queries = 3 * 3000;
        assert!(q.n_control + q.n_treatment < total_queries);
        // user-level rows are users; count their queries for comparison
        assert!(u.exposure_rate > q.exposure_rate);
    }

    #[test]
    fn config_validation() {
        assert!(AbConfig { metrics: vec!["dwell".into()], ..Default::default() }.validate().is_err());
        assert!(AbConfig { cuped_covariate: Some("x".into()), ..Default::default() }.validate().is_err());
        assert!(AbConfig { ratios: vec![0.7, 0.7], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn cuped_flagged_in_method() {
        let w = world();
        let s = Scorer::new("c", vec![1.0; 4]);
        let cfg = AbConfig { n_users: 2000, cuped_covariate: Some(PRE_SUCCESS_RATE.into()), ..Default::default() };
        let r = run_abtest(&w, &s, &s, &cfg, Stream::root(4), &[]).unwrap();
        assert_eq!(r.method, Method::CupedWelch);
        assert!(r.metrics["success_rate"].cuped_theta.unwrap() > 0.0);
    }
}

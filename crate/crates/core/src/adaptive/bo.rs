//! Bayesian optimisation of scorer parameters.
//!
//! Parameters live in the unit cube and are mapped linearly onto
//! `[lo, hi]` for each free weight or boost. Each run starts from a Halton
//! design, then repeatedly fits a GP to the standardised utilities and
//! evaluates the candidate with the largest expected improvement out of a
//! fresh uniform batch.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gp::{expected_improvement_at, gp_fit, gp_predict, GpModel, KernelParams};
use crate::counterfactual::{reconstruct, BoostRule, Scorer};
use crate::error::{Error, Result};
use crate::online::abtest::{AbConfig, AbEngine};
use crate::rng::Stream;
use crate::simworld::World;
use crate::stats::{mean, sample_variance};
use crate::types::CounterfactualRecord;

const HALTON_BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamTarget {
    Weight { index: usize },
    Boost { attr: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub target: ParamTarget,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerTemplate {
    pub base: Scorer,
    pub params: Vec<ParamSpec>,
}

impl ScorerTemplate {
    pub fn dimension(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() || self.params.len() > HALTON_BASES.len() {
            return Err(Error::InvalidValue(format!(
                "template needs 1 to {} free parameters, got {}",
                HALTON_BASES.len(),
                self.params.len()
            )));
        }
        for p in &self.params {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo <= p.hi) {
                return Err(Error::InvalidValue(format!("parameter `{}` has bad range [{}, {}]", p.name, p.lo, p.hi)));
            }
            if let ParamTarget::Weight { index } = p.target {
                if index >= self.base.dimension() {
                    return Err(Error::DimensionMismatch { expected: self.base.dimension(), found: index + 1 });
                }
            }
        }
        Ok(())
    }

    pub fn values(&self, unit: &[f64]) -> Vec<f64> {
        self.params.iter().zip(unit).map(|(p, u)| p.lo + u * (p.hi - p.lo)).collect()
    }

    pub fn instantiate(&self, unit: &[f64]) -> Scorer {
        let mut s = self.base.clone();
        for (p, v) in self.params.iter().zip(self.values(unit)) {
            s.variant.parameters.insert(p.name.clone(), v);
            match &p.target {
                ParamTarget::Weight { index } => s.weights[*index] = v,
                ParamTarget::Boost { attr, value } => {
                    match s.boosts.iter_mut().find(|b| &b.attr == attr && &b.value == value) {
                        Some(b) => b.boost = v,
                        None => s.boosts.push(BoostRule::new(attr, value, v)),
                    }
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    pub budget: usize,
    pub initial: usize,
    pub candidates: usize,
    pub kernel: KernelParams,
    /// Raise the GP noise to the mean squared standard error of noisy utilities.
    pub noise_from_std_error: bool,
    pub flat_tolerance: f64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            budget: 25,
            initial: 5,
            candidates: 1000,
            kernel: KernelParams::default(),
            noise_from_std_error: true,
            flat_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoEvaluation {
    pub round: usize,
    pub initial: bool,
    pub unit: Vec<f64>,
    pub params: Vec<f64>,
    pub utility: f64,
    pub std_error: Option<f64>,
    pub p_value: Option<f64>,
    /// Proportion of changed queries (offline runs only).
    pub observed: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub x: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoResult {
    pub param_names: Vec<String>,
    pub evaluations: Vec<BoEvaluation>,
    pub best_unit: Vec<f64>,
    pub best_params: Vec<f64>,
    /// Observed utility for offline runs, posterior mean for online runs.
    pub best_utility: f64,
    pub flat_surface: bool,
    /// GP posterior over the first parameter axis (one-parameter templates only).
    pub surface: Vec<SurfacePoint>,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Points 1..=n of the Halton sequence in `d` dimensions.
pub fn halton(n: usize, d: usize) -> Vec<Vec<f64>> {
    (1..=n as u64)
        .map(|i| HALTON_BASES[..d].iter().map(|&b| radical_inverse(i, b)).collect())
        .collect()
}

fn uniform_points(n: usize, d: usize, stream: Stream) -> Vec<Vec<f64>> {
    let mut rng = stream.rng();
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

struct Outcome {
    utility: f64,
    std_error: Option<f64>,
    p_value: Option<f64>,
    observed: Option<f64>,
}

struct Fitted {
    gp: GpModel,
    center: f64,
    scale: f64,
}

impl Fitted {
    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = gp_predict(&self.gp, x);
        (self.center + self.scale * m, self.scale * self.scale * v)
    }
}

fn fit(evals: &[BoEvaluation], cfg: &BoConfig) -> Result<Fitted> {
    let ys: Vec<f64> = evals.iter().map(|e| e.utility).collect();
    let center = mean(&ys);
    let sd = if ys.len() > 1 { sample_variance(&ys).sqrt() } else { 0.0 };
    let scale = if sd > 1e-12 { sd } else { 1.0 };
    let mut kernel = cfg.kernel;
    if cfg.noise_from_std_error {
        let se2: Vec<f64> = evals.iter().filter_map(|e| e.std_error).map(|s| s * s).collect();
        if !se2.is_empty() {
            kernel.noise_var = kernel.noise_var.max(mean(&se2) / (scale * scale));
        }
    }
    let xs: Vec<Vec<f64>> = evals.iter().map(|e| e.unit.clone()).collect();
    let zs: Vec<f64> = ys.iter().map(|y| (y - center) / scale).collect();
    Ok(Fitted { gp: gp_fit(&xs, &zs, kernel)?, center, scale })
}

fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn bo_loop<F>(template: &ScorerTemplate, cfg: &BoConfig, stream: Stream, mut eval: F) -> Result<Vec<BoEvaluation>>
where
    F: FnMut(usize, &Scorer) -> Result<Outcome>,
{
    template.validate()?;
    if cfg.budget == 0 || cfg.candidates == 0 {
        return Err(Error::InvalidValue("budget and candidates must be >= 1".into()));
    }
    let d = template.dimension();
    let mut evals: Vec<BoEvaluation> = Vec::with_capacity(cfg.budget);
    let mut record = |round: usize, initial: bool, unit: Vec<f64>, evals: &mut Vec<BoEvaluation>| -> Result<()> {
        let o = eval(round, &template.instantiate(&unit))?;
        log::debug!("bo round {round}: unit {unit:?} utility {:.6}", o.utility);
        evals.push(BoEvaluation {
            round,
            initial,
            params: template.values(&unit),
            unit,
            utility: o.utility,
            std_error: o.std_error,
            p_value: o.p_value,
            observed: o.observed,
        });
        Ok(())
    };
    for (round, unit) in halton(cfg.initial.min(cfg.budget), d).into_iter().enumerate() {
        record(round, true, unit, &mut evals)?;
    }
    for round in evals.len()..cfg.budget {
        let model = fit(&evals, cfg)?;
        let best = evals.iter().map(|e| e.utility).fold(f64::NEG_INFINITY, f64::max);
        let cands = uniform_points(cfg.candidates, d, stream.child("candidates").index(round as u64));
        let ei: Vec<f64> = cands
            .par_iter()
            .map(|x| {
                let (m, v) = model.predict(x);
                expected_improvement_at(m, v, best)
            })
            .collect();
        let pick = cands[first_argmax(&ei)].clone();
        record(round, false, pick, &mut evals)?;
    }
    Ok(evals)
}

fn surface(template: &ScorerTemplate, evals: &[BoEvaluation], cfg: &BoConfig) -> Result<Vec<SurfacePoint>> {
    if template.dimension() != 1 {
        return Ok(Vec::new());
    }
    let model = fit(evals, cfg)?;
    Ok((0..=100)
        .map(|i| {
            let u = i as f64 / 100.0;
            let (m, v) = model.predict(&[u]);
            SurfacePoint { x: template.values(&[u])[0], mean: m, sd: v.sqrt() }
        })
        .collect())
}

/// Share of records whose top-k under `scorer` differs from the served list.
pub fn observed_proportion(records: &[CounterfactualRecord], scorer: &Scorer) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no counterfactual records".into()));
    }
    let changed = records
        .par_iter()
        .map(|r| Ok(reconstruct(r, scorer, r.served_results.k)?.items != r.served_results.items))
        .collect::<Result<Vec<bool>>>()?;
    Ok(changed.iter().filter(|&&c| c).count() as f64 / records.len() as f64)
}

/// Finds parameters whose changed-query proportion is closest to `target`.
pub fn run_bo_offline(
    records: &[CounterfactualRecord],
    template: &ScorerTemplate,
    target_proportion: f64,
    cfg: &BoConfig,
    stream: Stream,
) -> Result<BoResult> {
    if !(0.0..=1.0).contains(&target_proportion) {
        return Err(Error::InvalidValue(format!("target proportion {target_proportion} outside [0, 1]")));
    }
    let evals = bo_loop(template, cfg, stream, |_, scorer| {
        let p = observed_proportion(records, scorer)?;
        Ok(Outcome { utility: -(p - target_proportion).powi(2), std_error: None, p_value: None, observed: Some(p) })
    })?;
    let utils: Vec<f64> = evals.iter().map(|e| e.utility).collect();
    let best = first_argmax(&utils);
    let spread = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max) - utils.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BoResult {
        param_names: template.params.iter().map(|p| p.name.clone()).collect(),
        best_unit: evals[best].unit.clone(),
        best_params: evals[best].params.clone(),
        best_utility: evals[best].utility,
        flat_surface: spread <= cfg.flat_tolerance,
        surface: surface(template, &evals, cfg)?,
        evaluations: evals,
    })
}

/// Each evaluation is a fresh simulated A/B test of the instantiated
/// template against `control`; utility is the fixed-horizon estimate of the
/// first configured metric. The returned parameters maximise the GP
/// posterior mean over the evaluated points and a uniform candidate batch.
pub fn run_bo_online(
    world: &World,
    control: &Scorer,
    template: &ScorerTemplate,
    cfg: &BoConfig,
    ab: &AbConfig,
    stream: Stream,
) -> Result<BoResult> {
    ab.validate()?;
    let metric = ab
        .metrics
        .first()
        .ok_or_else(|| Error::InvalidValue("A/B config lists no metric".into()))?
        .clone();
    let evals = bo_loop(template, cfg, stream, |round, scorer| {
        let engine = AbEngine::new(world, control, scorer, ab.k)?;
        let r = engine.run(ab, stream.child("abtest").index(round as u64), &[])?;
        let m = r.metrics[&metric];
        Ok(Outcome { utility: m.estimate, std_error: Some(m.std_error), p_value: Some(m.p_value), observed: None })
    })?;
    let bonferroni = ab.alpha / evals.len() as f64;
    let flat_surface = !evals.iter().any(|e| e.p_value.is_some_and(|p| p <= bonferroni));
    let (best_unit, best_utility) = if evals.len() == 1 {
        (evals[0].unit.clone(), evals[0].utility)
    } else {
        let model = fit(&evals, cfg)?;
        let mut pool: Vec<Vec<f64>> = evals.iter().map(|e| e.unit.clone()).collect();
        pool.extend(uniform_points(cfg.candidates, template.dimension(), stream.child("final")));
        let means: Vec<f64> = pool.par_iter().map(|x| model.predict(x).0).collect();
        let i = first_argmax(&means);
        (pool[i].clone(), means[i])
    };
    Ok(BoResult {
        param_names: template.params.iter().map(|p| p.name.clone()).collect(),
        best_params: template.values(&best_unit),
        best_unit,
        best_utility,
        flat_surface,
        surface: surface(template, &evals, cfg)?,
        evaluations: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_first_points() {
        let h = halton(4, 2);
        assert_eq!(h[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(h[1], vec![0.25, 2.0 / 3.0]);
        assert_eq!(h[3][0], 0.125);
    }

    #[test]
    fn template_maps_unit_interval() {
        let t = ScorerTemplate {
            base: Scorer::new("t", vec![1.0, 0.0]),
            params: vec![
                ParamSpec { name: "w1".into(), target: ParamTarget::Weight { index: 1 }, lo: -1.0, hi: 1.0 },
                ParamSpec {
                    name: "promo".into(),
                    target: ParamTarget::Boost { attr: "kind".into(), value: "promo".into() },
                    lo: 0.0,
                    hi: 2.0,
                },
            ],
        };
        t.validate().unwrap();
        let s = t.instantiate(&[0.75, 0.5]);
        assert_eq!(s.weights, vec![1.0, 0.5]);
        assert_eq!(s.boosts.len(), 1);
        assert_eq!(s.boosts[0].boost, 1.0);
        assert_eq!(s.variant.parameters["promo"], 1.0);
        let bad = ScorerTemplate { params: vec![ParamSpec { name: "x".into(), target: ParamTarget::Weight { index: 5 }, lo: 0.0, hi: 1.0 }], ..t };
        assert!(bad.validate().is_err());
    }
}

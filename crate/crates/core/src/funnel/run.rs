//! Sequential stage execution behind criteria gates.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{
    resolve_stat, BoMode, DataSource, FunnelConfig, JudgmentOrigin, StageConfig, StageKind, StageSettings,
};
use crate::adaptive::bandit::run_bandit;
use crate::adaptive::bo::{run_bo_offline, run_bo_online, BoResult, ScorerTemplate};
use crate::chart::{Band, BarChart, LineChart, Series};
use crate::counterfactual::{quality_check, reconstruct_pair, Scorer};
use crate::error::{Error, Result};
use crate::gates::{evaluate_gates, prefixed, Criterion, CriterionKind, GateOutcome, StatMap};
use crate::interleave::{run_interleave, QueryOutcome, Team};
use crate::logs::{read_counterfactual, read_interactions, read_judgments};
use crate::offline::{judgments_from_clicks, offline_validation_report, Judgment, JudgmentSource};
use crate::online::abtest::run_abtest;
use crate::rng::Stream;
use crate::simworld::{generate_world, World};
use crate::types::{CounterfactualRecord, Interaction};
use crate::verify::verification_report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageVerdict {
    Advance,
    ShortcutExit,
    Ship,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalVerdict {
    Ship,
    ShortcutExit,
    /// Every necessary gate passed but a sufficient criterion did not.
    NoShip,
    Error,
}

impl FinalVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalVerdict::Ship => "ship",
            FinalVerdict::ShortcutExit => "shortcut_exit",
            FinalVerdict::NoShip => "no_ship",
            FinalVerdict::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: StageKind,
    /// Logical clock ticks, so reruns produce identical logs.
    pub started: u64,
    pub finished: u64,
    pub verdict: StageVerdict,
    pub gates: Vec<GateOutcome>,
    pub statistics: StatMap,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReason {
    pub stage: StageKind,
    pub gate: Option<GateOutcome>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub funnel: String,
    pub seed: u64,
    pub control: String,
    pub candidate: String,
    pub stages: Vec<StageRecord>,
    pub skipped: Vec<StageKind>,
    pub final_verdict: FinalVerdict,
    pub failure_reason: Option<FailureReason>,
}

impl DecisionLog {
    pub fn stage(&self, kind: StageKind) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == kind)
    }

    /// Checks the log's own consistency rules.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let blocking = |g: &GateOutcome| matches!(g.kind, CriterionKind::Necessary | CriterionKind::Guardrail);
        match self.final_verdict {
            FinalVerdict::Ship => {
                if let Some(g) = self.stages.iter().flat_map(|s| &s.gates).find(|g| !g.passed) {
                    if blocking(g) || g.kind == CriterionKind::Sufficient {
                        return Err(format!("ship with failed gate `{}`", g.criterion_id));
                    }
                }
            }
            FinalVerdict::ShortcutExit => {
                let last = self.stages.last().ok_or("shortcut_exit without stages")?;
                if last.verdict != StageVerdict::ShortcutExit || !last.gates.iter().any(|g| blocking(g) && !g.passed) {
                    return Err("shortcut_exit without a failed necessary or guardrail gate".into());
                }
            }
            FinalVerdict::NoShip | FinalVerdict::Error => {}
        }
        if self.stages.iter().filter(|s| s.verdict != StageVerdict::Advance).count() > 1 {
            return Err("more than one terminal stage verdict".into());
        }
        Ok(())
    }
}

pub(crate) struct StageOutput {
    pub stats: StatMap,
    pub report: serde_json::Value,
    pub files: Vec<(String, String)>,
    pub notes: Vec<String>,
}

struct Inputs<'c> {
    cfg: &'c FunnelConfig,
    world: Option<World>,
    log: Option<(Vec<CounterfactualRecord>, Vec<Interaction>)>,
}

impl<'c> Inputs<'c> {
    fn world(&mut self) -> Result<&World> {
        if self.world.is_none() {
            let DataSource::World(w) = &self.cfg.data else {
                return Err(Error::Config("this stage needs a simulator world".into()));
            };
            self.world = Some(generate_world(w)?);
        }
        Ok(self.world.as_ref().expect("just set"))
    }

    fn log(&mut self) -> Result<&(Vec<CounterfactualRecord>, Vec<Interaction>)> {
        if self.log.is_none() {
            let log = match &self.cfg.data {
                DataSource::World(_) => {
                    let control = self.cfg.control.scorer();
                    let (k, seed) = (self.cfg.k, self.cfg.seed);
                    self.world()?.simulate_log(&control, k, Stream::root(seed).child("log"))?
                }
                DataSource::Logs(paths) => {
                    let records = read_counterfactual(&paths.counterfactual)?;
                    let interactions = match &paths.interactions {
                        Some(p) => read_interactions(p)?,
                        None => Vec::new(),
                    };
                    (records, interactions)
                }
            };
            self.log = Some(log);
        }
        Ok(self.log.as_ref().expect("just set"))
    }
}

fn csv_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn run_stage(stage: &StageConfig, inputs: &mut Inputs, stream: Stream) -> Result<StageOutput> {
    let cfg = inputs.cfg;
    let control = cfg.control.scorer();
    let candidate = cfg.candidate.scorer();
    match &stage.settings {
        StageSettings::ReconstructionQuality => {
            let (records, _) = inputs.log()?;
            let q = quality_check(records, &control)?;
            let mut stats = StatMap::new();
            stats.insert("mean_jaccard".into(), Some(q.mean_jaccard));
            stats.insert("mean_spearman".into(), q.mean_spearman);
            stats.insert("exact_match_rate".into(), Some(q.exact_match_rate));
            stats.insert("n_queries".into(), Some(q.n_queries as f64));
            let chart = BarChart {
                title: "Reconstruction of the served lists".into(),
                y_label: "agreement".into(),
                bars: vec![
                    ("exact match".into(), q.exact_match_rate),
                    ("mean Jaccard".into(), q.mean_jaccard),
                    ("mean Spearman".into(), q.mean_spearman.unwrap_or(f64::NAN)),
                ],
                threshold: None,
            };
            Ok(StageOutput {
                stats,
                report: serde_json::to_value(&q)?,
                files: vec![("quality.svg".into(), chart.to_svg())],
                notes: Vec::new(),
            })
        }
        StageSettings::OfflineVerify(v) => {
            let (records, interactions) = inputs.log()?;
            let r = verification_report(records, &control, &candidate, interactions, &v.segment_attributes, &[])?;
            let mut segments = vec![("overall".to_string(), &r.overall)];
            segments.extend(r.by_success.iter().map(|(k, w)| (format!("by_success.{k}"), w)));
            segments.extend(r.by_attribute.iter().map(|(k, w)| (format!("by_attribute.{k}"), w)));
            let mut csv = String::from("segment,n_queries,n_changed,width,depth_jaccard_p50,depth_spearman_p50\n");
            for (name, w) in &segments {
                csv.push_str(&format!(
                    "{name},{},{},{},{},{}\n",
                    w.n_queries,
                    w.n_changed,
                    csv_float(w.width),
                    w.depth_jaccard.map_or(String::new(), |s| csv_float(s.p50)),
                    w.depth_spearman.map_or(String::new(), |s| csv_float(s.p50)),
                ));
            }
            let threshold = stage
                .criteria
                .iter()
                .find(|c| resolve_stat(stage.kind, &c.stat).1 == "overall.width")
                .map(|c| c.threshold);
            let chart = BarChart {
                title: "Width by segment".into(),
                y_label: "share of queries changed".into(),
                bars: segments.iter().map(|(n, w)| (n.replace("by_success.", "").replace("by_attribute.", ""), w.width)).collect(),
                threshold,
            };
            Ok(StageOutput {
                stats: r.statistics(),
                report: serde_json::to_value(&r)?,
                files: vec![("segments.csv".into(), csv), ("width.svg".into(), chart.to_svg())],
                notes: Vec::new(),
            })
        }
        StageSettings::OfflineValidate(s) => {
            let origin = s.judgments.unwrap_or(match &cfg.data {
                DataSource::World(_) => JudgmentOrigin::Human,
                DataSource::Logs(l) if l.judgments.is_some() => JudgmentOrigin::File,
                DataSource::Logs(_) => JudgmentOrigin::ClickLog,
            });
            let judgments: Vec<Judgment> = match origin {
                JudgmentOrigin::File => match &cfg.data {
                    DataSource::Logs(l) => read_judgments(l.judgments.as_ref().expect("validated"))?,
                    DataSource::World(_) => unreachable!("validated"),
                },
                JudgmentOrigin::ClickLog => {
                    let (records, interactions) = inputs.log()?;
                    judgments_from_clicks(records, interactions)
                }
                JudgmentOrigin::Human => {
                    let coverage = s.human_coverage;
                    let world = inputs.world()?;
                    let mut out = Vec::new();
                    for (i, q) in world.queries.iter().enumerate() {
                        if stream.child("judge").index(i as u64).rng().random::<f64>() >= coverage {
                            continue;
                        }
                        for (c, &g) in q.candidates.iter().zip(&q.grades) {
                            out.push(Judgment {
                                query_id: q.context.query_id.clone(),
                                item: c.item.clone(),
                                relevance: g,
                                source: JudgmentSource::Human,
                                rank: None,
                            });
                        }
                    }
                    out
                }
            };
            let (records, _) = inputs.log()?;
            let pairs = reconstruct_pair(records, &control, &candidate, s.k)?;
            let r = offline_validation_report(&pairs, &judgments, &s.metrics_config())?;
            let stats = r.statistics();
            let mut bars = Vec::new();
            for metric in ["success_at_k", "mrr", "ndcg_at_k"] {
                for side in ["control", "candidate"] {
                    let v = stats[&format!("{side}.{metric}.raw")].unwrap_or(f64::NAN);
                    bars.push((format!("{metric} {side}"), v));
                }
            }
            let chart = BarChart { title: "Offline metrics".into(), y_label: "metric".into(), bars, threshold: None };
            let mut notes = vec![format!("judgments from {origin:?} ({} rows)", judgments.len())];
            if r.candidate.no_overlap {
                notes.push("no candidate list overlaps the judged items".into());
            }
            Ok(StageOutput {
                stats,
                report: serde_json::to_value(&r)?,
                files: vec![("metrics.svg".into(), chart.to_svg())],
                notes,
            })
        }
        StageSettings::Interleave(s) => {
            let world = inputs.world()?;
            let run = run_interleave(world, &control, &candidate, s.n_queries, s.k, s.alpha, stream)?;
            let t = run.test;
            let decisive = t.wins_a + t.wins_b;
            let mut stats = StatMap::new();
            stats.insert("wins_control".into(), Some(t.wins_a as f64));
            stats.insert("wins_candidate".into(), Some(t.wins_b as f64));
            stats.insert("ties".into(), Some(t.ties as f64));
            stats.insert("p_value".into(), t.p_value);
            stats.insert("candidate_preferred".into(), Some(f64::from(u8::from(t.preferred == Some(Team::B)))));
            stats.insert("control_preferred".into(), Some(f64::from(u8::from(t.preferred == Some(Team::A)))));
            stats.insert("candidate_win_rate".into(), (decisive > 0).then(|| t.wins_b as f64 / decisive as f64));
            let mut csv = String::from("query_id,winner\n");
            let mut curve = Vec::new();
            let (mut a, mut b) = (0u64, 0u64);
            for (i, (q, o)) in run.outcomes.iter().enumerate() {
                let w = match o {
                    QueryOutcome::AWins => {
                        a += 1;
                        "control"
                    }
                    QueryOutcome::BWins => {
                        b += 1;
                        "candidate"
                    }
                    QueryOutcome::Tie => "tie",
                };
                csv.push_str(&format!("{q},{w}\n"));
                if a + b > 0 {
                    curve.push(((i + 1) as f64, b as f64 / (a + b) as f64));
                }
            }
            let chart = LineChart {
                title: "Interleaving: candidate share of decisive queries".into(),
                x_label: "queries".into(),
                y_label: "candidate win rate".into(),
                series: vec![Series { name: "candidate".into(), points: curve }],
                hlines: vec![0.5],
                ..Default::default()
            };
            Ok(StageOutput {
                stats,
                report: serde_json::to_value(&t)?,
                files: vec![("outcomes.csv".into(), csv), ("win_rate.svg".into(), chart.to_svg())],
                notes: Vec::new(),
            })
        }
        StageSettings::Abtest(a) => {
            let world = inputs.world()?;
            let r = run_abtest(world, &control, &candidate, a, stream, &[])?;
            let mut files = Vec::new();
            for (metric, tr) in &r.sequential {
                let mut csv = String::from("t,estimate,cs_low,cs_high,crossed\n");
                for p in &tr.points {
                    csv.push_str(&format!("{},{},{},{},{}\n", p.t, csv_float(p.estimate), csv_float(p.cs_low), csv_float(p.cs_high), p.crossed));
                }
                let x: Vec<f64> = tr.points.iter().map(|p| p.t as f64).collect();
                let chart = LineChart {
                    title: format!("Confidence sequence: {metric}"),
                    x_label: "paired units".into(),
                    y_label: "treatment - control".into(),
                    series: vec![Series { name: "estimate".into(), points: tr.points.iter().map(|p| (p.t as f64, p.estimate)).collect() }],
                    bands: vec![Band {
                        name: format!("{:.0}% sequence", 100.0 * (1.0 - tr.alpha)),
                        x,
                        lower: tr.points.iter().map(|p| p.cs_low).collect(),
                        upper: tr.points.iter().map(|p| p.cs_high).collect(),
                    }],
                    hlines: vec![0.0],
                    ..Default::default()
                };
                files.push((format!("trajectory_{metric}.csv"), csv));
                files.push((format!("sequence_{metric}.svg"), chart.to_svg()));
            }
            let chart = BarChart {
                title: "Fixed-horizon estimates".into(),
                y_label: "treatment - control".into(),
                bars: r.metrics.iter().map(|(m, e)| (m.clone(), e.estimate)).collect(),
                threshold: Some(0.0),
            };
            files.push(("estimates.svg".into(), chart.to_svg()));
            Ok(StageOutput { stats: r.statistics(), report: serde_json::to_value(&r)?, files, notes: r.notes.clone() })
        }
        StageSettings::Bandit(b) => {
            let mut arms: Vec<Scorer> = vec![control, candidate];
            arms.extend(cfg.arms.iter().map(|v| v.scorer()));
            let world = inputs.world()?;
            let run = run_bandit(world, &arms, b.horizon, &b.bandit, stream)?;
            let h = b.horizon;
            let mut stats = StatMap::new();
            let regret = *run.cumulative_regret.last().expect("horizon >= 1");
            stats.insert("cumulative_regret".into(), Some(regret));
            stats.insert("mean_regret".into(), Some(regret / h as f64));
            stats.insert("best_arm_is_candidate".into(), Some(f64::from(u8::from(run.best_arm == 1))));
            stats.insert("candidate_share".into(), Some(run.share(1, 0, h)));
            stats.insert("candidate_final_share".into(), Some(run.share(1, h - h / 4 - usize::from(h < 4), h)));
            let mut csv = format!(
                "round,{},cumulative_regret\n",
                run.arms.iter().map(|a| format!("pulls_{a}")).collect::<Vec<_>>().join(",")
            );
            for c in &run.checkpoints {
                let pulls: Vec<String> = c.pulls.iter().map(|p| p.to_string()).collect();
                csv.push_str(&format!("{},{},{}\n", c.round, pulls.join(","), csv_float(c.cumulative_regret)));
            }
            let share_series = run
                .arms
                .iter()
                .enumerate()
                .map(|(i, name)| Series {
                    name: name.clone(),
                    points: run.checkpoints.iter().map(|c| (c.round as f64, c.pulls[i] as f64 / c.round as f64)).collect(),
                })
                .collect();
            let shares = LineChart {
                title: "Bandit allocation".into(),
                x_label: "round".into(),
                y_label: "share of pulls".into(),
                series: share_series,
                ..Default::default()
            };
            let regret_chart = LineChart {
                title: "Cumulative expected regret".into(),
                x_label: "round".into(),
                y_label: "regret".into(),
                series: vec![Series {
                    name: "regret".into(),
                    points: run.checkpoints.iter().map(|c| (c.round as f64, c.cumulative_regret)).collect(),
                }],
                ..Default::default()
            };
            let report = serde_json::json!({
                "arms": run.arms,
                "true_rates": run.true_rates,
                "best_arm": run.best_arm,
                "final_state": run.final_state,
                "checkpoints": run.checkpoints,
            });
            Ok(StageOutput {
                stats,
                report,
                files: vec![
                    ("trajectory.csv".into(), csv),
                    ("allocation.svg".into(), shares.to_svg()),
                    ("regret.svg".into(), regret_chart.to_svg()),
                ],
                notes: vec!["allocation is adaptive; rates are not unbiased effect estimates".into()],
            })
        }
        StageSettings::Bo(b) => {
            let base = if b.base == "control" { control.clone() } else { candidate };
            let template = ScorerTemplate { base, params: b.params.clone() };
            let res = match b.mode {
                BoMode::Offline => {
                    let target = b.target_proportion.expect("validated");
                    let (records, _) = inputs.log()?;
                    run_bo_offline(records, &template, target, &b.bo, stream)?
                }
                BoMode::Online => {
                    let world = inputs.world()?;
                    run_bo_online(world, &control, &template, &b.bo, &b.abtest, stream)?
                }
            };
            Ok(bo_output(&res)?)
        }
    }
}

fn bo_output(res: &BoResult) -> Result<StageOutput> {
    let mut stats = StatMap::new();
    stats.insert("best_utility".into(), Some(res.best_utility));
    stats.insert("flat_surface".into(), Some(f64::from(u8::from(res.flat_surface))));
    stats.insert("n_evaluations".into(), Some(res.evaluations.len() as f64));
    let best_observed = res
        .evaluations
        .iter()
        .find(|e| e.unit == res.best_unit)
        .and_then(|e| e.observed);
    stats.insert("best_observed".into(), best_observed);
    for (n, v) in res.param_names.iter().zip(&res.best_params) {
        stats.insert(format!("best.{n}"), Some(*v));
    }
    let mut csv = format!("round,initial,{},utility,std_error,observed\n", res.param_names.join(","));
    for e in &res.evaluations {
        let params: Vec<String> = e.params.iter().map(|p| csv_float(*p)).collect();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.round,
            e.initial,
            params.join(","),
            csv_float(e.utility),
            e.std_error.map_or(String::new(), csv_float),
            e.observed.map_or(String::new(), csv_float)
        ));
    }
    let mut files = vec![("evaluations.csv".into(), csv)];
    if !res.surface.is_empty() {
        let mut s = String::from("x,mean,sd\n");
        for p in &res.surface {
            s.push_str(&format!("{},{},{}\n", csv_float(p.x), csv_float(p.mean), csv_float(p.sd)));
        }
        files.push(("surface.csv".into(), s));
        let chart = LineChart {
            title: "GP posterior of the utility".into(),
            x_label: res.param_names[0].clone(),
            y_label: "utility".into(),
            series: vec![Series { name: "posterior mean".into(), points: res.surface.iter().map(|p| (p.x, p.mean)).collect() }],
            bands: vec![Band {
                name: "±2 sd".into(),
                x: res.surface.iter().map(|p| p.x).collect(),
                lower: res.surface.iter().map(|p| p.mean - 2.0 * p.sd).collect(),
                upper: res.surface.iter().map(|p| p.mean + 2.0 * p.sd).collect(),
            }],
            markers: vec![Series {
                name: "evaluations".into(),
                points: res.evaluations.iter().map(|e| (e.params[0], e.utility)).collect(),
            }],
            hlines: Vec::new(),
        };
        files.push(("surface.svg".into(), chart.to_svg()));
    } else {
        let chart = LineChart {
            title: "Utility by round".into(),
            x_label: "round".into(),
            y_label: "utility".into(),
            markers: vec![Series {
                name: "evaluations".into(),
                points: res.evaluations.iter().map(|e| (e.round as f64, e.utility)).collect(),
            }],
            ..Default::default()
        };
        files.push(("utility.svg".into(), chart.to_svg()));
    }
    let notes = if res.flat_surface { vec!["response surface is flat: no parameter setting is preferred".into()] } else { Vec::new() };
    Ok(StageOutput { stats, report: serde_json::to_value(res)?, files, notes })
}

/// Gates for `stage` against every statistic produced so far; referenced
/// statistics a stage did not emit count as undefined.
fn stage_gates(stage: &StageConfig, all: &StatMap) -> Result<Vec<GateOutcome>> {
    let mut view = StatMap::new();
    let criteria: Vec<Criterion> = stage
        .criteria
        .iter()
        .map(|c| {
            let (owner, local) = resolve_stat(stage.kind, &c.stat);
            let key = format!("{owner}.{local}");
            view.insert(key.clone(), all.get(&key).copied().flatten());
            Criterion { stat: key, ..c.clone() }
        })
        .collect();
    let mut gates = evaluate_gates(&view, &criteria)?;
    // report the statistic as written in the config
    for (g, c) in gates.iter_mut().zip(&stage.criteria) {
        g.stat = c.stat.clone();
    }
    Ok(gates)
}

/// Removes artifacts this tool wrote on a previous run into `out`.
fn clear_own_artifacts(out: &Path) -> Result<()> {
    for f in super::report::REPORT_FILES {
        let p = out.join(f);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    for kind in StageKind::ALL {
        let p = out.join("stages").join(kind.as_str());
        if p.exists() {
            fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

fn write_artifacts(out: &Path, kind: StageKind, output: &StageOutput) -> Result<Vec<String>> {
    let rel = PathBuf::from("stages").join(kind.as_str());
    let dir = out.join(&rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    let report = serde_json::to_string_pretty(&output.report)? + "\n";
    for (name, body) in std::iter::once(("report.json".to_string(), report)).chain(output.files.iter().cloned()) {
        let p = dir.join(&name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(format!("stages/{}/{name}", kind.as_str()));
    }
    Ok(written)
}

/// Runs every stage in order, writing stage artifacts under
/// `out/stages/<stage>/`. Stage failures end the run with an `error`
/// verdict rather than an `Err`; `Err` is reserved for an unusable output
/// directory.
pub fn run_funnel(cfg: &FunnelConfig, out: &Path) -> Result<DecisionLog> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    clear_own_artifacts(out)?;
    let root = Stream::root(cfg.seed);
    let mut inputs = Inputs { cfg, world: None, log: None };
    let mut all = StatMap::new();
    let mut records = Vec::new();
    let mut clock = 0u64;
    let mut final_verdict = None;
    let mut failure_reason = None;
    let mut sufficient_failed: Option<(StageKind, GateOutcome)> = None;

    for (i, stage) in cfg.stages.iter().enumerate() {
        let started = clock;
        log::info!("stage {}: {}", i + 1, stage.kind);
        let t0 = std::time::Instant::now();
        let result = run_stage(stage, &mut inputs, root.child(stage.kind.as_str()));
        log::info!("stage {} finished in {:.2?}", stage.kind, t0.elapsed());
        clock += 1;
        let output = match result {
            Ok(o) => o,
            Err(e) => {
                log::error!("stage {} failed: {e}", stage.kind);
                records.push(StageRecord {
                    stage: stage.kind,
                    started,
                    finished: clock,
                    verdict: StageVerdict::Error,
                    gates: Vec::new(),
                    statistics: StatMap::new(),
                    artifacts: Vec::new(),
                    notes: Vec::new(),
                    error: Some(e.to_string()),
                });
                final_verdict = Some(FinalVerdict::Error);
                failure_reason = Some(FailureReason { stage: stage.kind, gate: None, message: e.to_string() });
                break;
            }
        };
        all.extend(prefixed(stage.kind.as_str(), &output.stats));
        let gates = stage_gates(stage, &all)?;
        let artifacts = write_artifacts(out, stage.kind, &output)?;
        let blocking = gates
            .iter()
            .find(|g| matches!(g.kind, CriterionKind::Necessary | CriterionKind::Guardrail) && !g.passed)
            .cloned();
        let sufficient: Vec<&GateOutcome> = gates.iter().filter(|g| g.kind == CriterionKind::Sufficient).collect();
        let verdict = if let Some(g) = blocking {
            failure_reason = Some(FailureReason {
                stage: stage.kind,
                message: failure_message(stage.kind, &g),
                gate: Some(g),
            });
            final_verdict = Some(FinalVerdict::ShortcutExit);
            StageVerdict::ShortcutExit
        } else if !sufficient.is_empty() && sufficient.iter().all(|g| g.passed) {
            final_verdict = Some(FinalVerdict::Ship);
            StageVerdict::Ship
        } else {
            if let Some(g) = sufficient.iter().find(|g| !g.passed) {
                sufficient_failed = Some((stage.kind, (*g).clone()));
            }
            StageVerdict::Advance
        };
        records.push(StageRecord {
            stage: stage.kind,
            started,
            finished: clock,
            verdict,
            gates,
            statistics: output.stats,
            artifacts,
            notes: output.notes,
            error: None,
        });
        if final_verdict.is_some() {
            break;
        }
    }

    let final_verdict = match final_verdict {
        Some(v) => v,
        None => match sufficient_failed {
            Some((stage, g)) => {
                failure_reason = Some(FailureReason { stage, message: failure_message(stage, &g), gate: Some(g) });
                FinalVerdict::NoShip
            }
            None => {
                // no sufficient criteria configured: passing every gate ships
                if let Some(last) = records.last_mut() {
                    last.verdict = StageVerdict::Ship;
                }
                FinalVerdict::Ship
            }
        },
    };
    let skipped = cfg.stages.iter().skip(records.len()).map(|s| s.kind).collect();
    Ok(DecisionLog {
        funnel: cfg.name.clone(),
        seed: cfg.seed,
        control: cfg.control.name.clone(),
        candidate: cfg.candidate.name.clone(),
        stages: records,
        skipped,
        final_verdict,
        failure_reason,
    })
}

fn failure_message(stage: StageKind, g: &GateOutcome) -> String {
    let observed = g.observed.map_or("undefined".to_string(), |o| format!("{o}"));
    format!(
        "stage `{stage}`: {} criterion `{}` failed: {} {} {} (observed {observed})",
        g.kind,
        g.criterion_id,
        g.stat,
        g.comparator.symbol(),
        g.threshold
    )
}

//! Funnel configuration (TOML).
//!
//! ```toml
//! [funnel]
//! name = "promo-boost"
//! seed = 7
//! stages = ["reconstruction_quality", "offline_verify", "abtest"]
//!
//! [data]
//! k = 10
//! [data.world]            # or [data.logs] with counterfactual/interactions/judgments paths
//! n_queries = 2000
//!
//! [variants.control]
//! name = "prod"
//! weights = [1.0, 0.8, 0.6, 0.4]
//! [variants.candidate]
//! name = "promo"
//! weights = [1.0, 0.8, 0.6, 0.4]
//! boosts = [{ attr = "kind", value = "promo", boost = 0.5 }]
//!
//! [stages.offline_verify]
//! segment_attributes = ["length_class"]
//! [[stages.offline_verify.criteria]]
//! id = "changes-enough"
//! stat = "overall.width"
//! cmp = ">="
//! threshold = 0.05
//! kind = "necessary"
//! ```
//!
//! Criterion statistics are stage-local (`overall.width`) or qualified with
//! an earlier stage's name (`offline_verify.overall.width`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::adaptive::bandit::BanditConfig;
use crate::adaptive::bo::{BoConfig, ParamSpec};
use crate::counterfactual::{BoostRule, Scorer};
use crate::error::{Error, Result};
use crate::gates::{Criterion, CriterionKind};
use crate::offline::{ExaminationCurve, OfflineValidationConfig, DEFAULT_W_MAX};
use crate::online::abtest::{AbConfig, METRICS};
use crate::simworld::WorldConfig;
use crate::types::VariantId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    ReconstructionQuality,
    OfflineVerify,
    OfflineValidate,
    Interleave,
    Abtest,
    Bandit,
    Bo,
}

impl StageKind {
    pub const ALL: [StageKind; 7] = [
        StageKind::ReconstructionQuality,
        StageKind::OfflineVerify,
        StageKind::OfflineValidate,
        StageKind::Interleave,
        StageKind::Abtest,
        StageKind::Bandit,
        StageKind::Bo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::ReconstructionQuality => "reconstruction_quality",
            StageKind::OfflineVerify => "offline_verify",
            StageKind::OfflineValidate => "offline_validate",
            StageKind::Interleave => "interleave",
            StageKind::Abtest => "abtest",
            StageKind::Bandit => "bandit",
            StageKind::Bo => "bo",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StageKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: String,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub boosts: Vec<BoostRule>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

impl VariantSpec {
    pub fn scorer(&self) -> Scorer {
        Scorer {
            variant: VariantId { name: self.name.clone(), parameters: self.parameters.clone() },
            weights: self.weights.clone(),
            boosts: self.boosts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPaths {
    pub counterfactual: PathBuf,
    #[serde(default)]
    pub interactions: Option<PathBuf>,
    #[serde(default)]
    pub judgments: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    World(WorldConfig),
    Logs(LogPaths),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentOrigin {
    /// Judgments file from `[data.logs]`.
    File,
    /// Derived from logged clicks, with IPS ranks.
    ClickLog,
    /// Simulator ground-truth grades for a sample of queries.
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineValidateSettings {
    pub k: usize,
    pub curve: ExaminationCurve,
    pub w_max: f64,
    pub max_grade: u32,
    pub judgments: Option<JudgmentOrigin>,
    /// Share of queries given simulator judgments (`human` origin).
    pub human_coverage: f64,
}

impl Default for OfflineValidateSettings {
    fn default() -> Self {
        OfflineValidateSettings {
            k: 10,
            curve: ExaminationCurve::Uniform,
            w_max: DEFAULT_W_MAX,
            max_grade: 4,
            judgments: None,
            human_coverage: 1.0,
        }
    }
}

impl OfflineValidateSettings {
    pub fn metrics_config(&self) -> OfflineValidationConfig {
        OfflineValidationConfig { k: self.k, curve: self.curve.clone(), w_max: self.w_max, max_grade: self.max_grade }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub segment_attributes: Vec<String>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings { segment_attributes: vec!["length_class".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterleaveSettings {
    pub n_queries: usize,
    pub k: usize,
    pub alpha: f64,
}

impl Default for InterleaveSettings {
    fn default() -> Self {
        InterleaveSettings { n_queries: 5000, k: 10, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSettings {
    pub horizon: usize,
    pub bandit: BanditConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoMode {
    Offline,
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoSettings {
    pub mode: BoMode,
    pub target_proportion: Option<f64>,
    /// Variant whose scorer the free parameters modify.
    pub base: String,
    pub params: Vec<ParamSpec>,
    pub bo: BoConfig,
    pub abtest: AbConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum StageSettings {
    ReconstructionQuality,
    OfflineVerify(VerifySettings),
    OfflineValidate(OfflineValidateSettings),
    Interleave(InterleaveSettings),
    Abtest(AbConfig),
    Bandit(BanditSettings),
    Bo(BoSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub kind: StageKind,
    pub settings: StageSettings,
    pub criteria: Vec<Criterion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelConfig {
    pub name: String,
    pub seed: u64,
    /// Serving depth of the simulated production log.
    pub k: usize,
    pub data: DataSource,
    pub control: VariantSpec,
    pub candidate: VariantSpec,
    /// Extra bandit arms besides control and candidate.
    pub arms: Vec<VariantSpec>,
    pub stages: Vec<StageConfig>,
    pub out: Option<PathBuf>,
}

// ---- raw TOML layer ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunnel {
    #[serde(default = "default_name")]
    name: String,
    #[serde(default)]
    seed: u64,
    stages: Vec<String>,
    #[serde(default)]
    out: Option<PathBuf>,
}

fn default_name() -> String {
    "funnel".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    #[serde(default = "default_k")]
    k: usize,
    world: Option<WorldConfig>,
    logs: Option<LogPaths>,
}

fn default_k() -> usize {
    10
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariants {
    control: Option<VariantSpec>,
    candidate: Option<VariantSpec>,
    #[serde(default)]
    arms: Vec<VariantSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    funnel: RawFunnel,
    data: RawData,
    variants: RawVariants,
    #[serde(default)]
    stages: BTreeMap<String, toml::Table>,
}

fn take<T: DeserializeOwned>(table: &mut toml::Table, key: &str, what: &str) -> Result<Option<T>> {
    table
        .remove(key)
        .map(|v| v.try_into::<T>().map_err(|e| Error::Config(format!("{what}.{key}: {e}"))))
        .transpose()
}

fn rest<T: DeserializeOwned>(table: toml::Table, what: &str) -> Result<T> {
    toml::Value::Table(table)
        .try_into::<T>()
        .map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn stage_settings(kind: StageKind, mut table: toml::Table) -> Result<(StageSettings, Vec<Criterion>)> {
    let what = format!("stages.{kind}");
    let mut criteria: Vec<Criterion> = take(&mut table, "criteria", &what)?.unwrap_or_default();
    for c in &mut criteria {
        c.stage.get_or_insert_with(|| kind.as_str().to_string());
    }
    let settings = match kind {
        StageKind::ReconstructionQuality => {
            if let Some(k) = table.keys().next() {
                return Err(Error::Config(format!("{what}: unknown key `{k}`")));
            }
            StageSettings::ReconstructionQuality
        }
        StageKind::OfflineVerify => StageSettings::OfflineVerify(rest(table, &what)?),
        StageKind::OfflineValidate => StageSettings::OfflineValidate(rest(table, &what)?),
        StageKind::Interleave => StageSettings::Interleave(rest(table, &what)?),
        StageKind::Abtest => StageSettings::Abtest(rest(table, &what)?),
        StageKind::Bandit => {
            let horizon = take(&mut table, "horizon", &what)?.unwrap_or(10_000);
            StageSettings::Bandit(BanditSettings { horizon, bandit: rest(table, &what)? })
        }
        StageKind::Bo => {
            let mode = take(&mut table, "mode", &what)?.unwrap_or(BoMode::Offline);
            let target_proportion = take(&mut table, "target_proportion", &what)?;
            let base = take(&mut table, "base", &what)?.unwrap_or_else(|| "candidate".to_string());
            let params = take(&mut table, "params", &what)?
                .ok_or_else(|| Error::Config(format!("{what}: `params` is required")))?;
            let abtest = take(&mut table, "abtest", &what)?.unwrap_or_default();
            StageSettings::Bo(BoSettings { mode, target_proportion, base, params, bo: rest(table, &what)?, abtest })
        }
    };
    Ok((settings, criteria))
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<FunnelConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let order: Vec<StageKind> = raw.funnel.stages.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    if order.is_empty() {
        return Err(Error::Config("funnel.stages must list at least one stage".into()));
    }
    for (i, k) in order.iter().enumerate() {
        if order[..i].contains(k) {
            return Err(Error::Config(format!("stage `{k}` listed twice")));
        }
    }
    let mut tables = raw.stages;
    for name in tables.keys() {
        let kind: StageKind = name.parse()?;
        if !order.contains(&kind) {
            return Err(Error::Config(format!("[stages.{name}] configured but not listed in funnel.stages")));
        }
    }
    let control = raw.variants.control.ok_or_else(|| Error::MissingVariant("control".into()))?;
    let candidate = raw.variants.candidate.ok_or_else(|| Error::MissingVariant("candidate".into()))?;

    let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
    let data = match (raw.data.world, raw.data.logs) {
        (Some(w), None) => {
            w.validate()?;
            DataSource::World(w)
        }
        (None, Some(l)) => DataSource::Logs(LogPaths {
            counterfactual: resolve(l.counterfactual),
            interactions: l.interactions.map(resolve),
            judgments: l.judgments.map(resolve),
        }),
        _ => return Err(Error::Config("[data] needs exactly one of `world` or `logs`".into())),
    };
    if raw.data.k == 0 {
        return Err(Error::Config("data.k must be >= 1".into()));
    }

    let mut stages = Vec::with_capacity(order.len());
    for kind in &order {
        let table = tables.remove(kind.as_str()).unwrap_or_default();
        let (settings, criteria) = stage_settings(*kind, table)?;
        stages.push(StageConfig { kind: *kind, settings, criteria });
    }
    let config = FunnelConfig {
        name: raw.funnel.name,
        seed: raw.funnel.seed,
        k: raw.data.k,
        data,
        control,
        candidate,
        arms: raw.variants.arms,
        stages,
        out: raw.funnel.out.map(resolve),
    };
    validate(&config)?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<FunnelConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, dir)
}

impl FunnelConfig {
    /// A one-stage funnel that runs `kind` alone, keeping its configured
    /// settings (or the defaults) and the criteria that only read its own
    /// statistics.
    pub fn single_stage(&self, kind: StageKind) -> Result<FunnelConfig> {
        let mut stage = match self.stages.iter().find(|s| s.kind == kind) {
            Some(s) => s.clone(),
            None => {
                let (settings, criteria) = stage_settings(kind, toml::Table::new())?;
                StageConfig { kind, settings, criteria }
            }
        };
        stage.criteria.retain(|c| resolve_stat(kind, &c.stat).0 == kind);
        let cfg = FunnelConfig { stages: vec![stage], ..self.clone() };
        validate(&cfg)?;
        Ok(cfg)
    }
}

/// Splits `stat` into (owning stage, stage-local path).
pub fn resolve_stat(owner: StageKind, stat: &str) -> (StageKind, String) {
    if let Some((head, tail)) = stat.split_once('.') {
        if let Ok(kind) = head.parse::<StageKind>() {
            return (kind, tail.to_string());
        }
    }
    (owner, stat.to_string())
}

fn validate(cfg: &FunnelConfig) -> Result<()> {
    let d = cfg.control.weights.len();
    for v in std::iter::once(&cfg.candidate).chain(&cfg.arms) {
        if v.weights.len() != d {
            return Err(Error::Config(format!(
                "variant `{}` has {} weights, control has {d}",
                v.name,
                v.weights.len()
            )));
        }
    }
    if let DataSource::World(w) = &cfg.data {
        if w.feature_dim != d {
            return Err(Error::Config(format!("variants have {d} weights but world feature_dim is {}", w.feature_dim)));
        }
    }
    let position = |k: StageKind| cfg.stages.iter().position(|s| s.kind == k);
    let mut sufficient_stage: Option<StageKind> = None;
    for (i, stage) in cfg.stages.iter().enumerate() {
        let online = matches!(stage.kind, StageKind::Interleave | StageKind::Abtest | StageKind::Bandit)
            || matches!(&stage.settings, StageSettings::Bo(b) if b.mode == BoMode::Online);
        if online && matches!(cfg.data, DataSource::Logs(_)) {
            return Err(Error::Config(format!("stage `{}` needs a simulator world ([data.world])", stage.kind)));
        }
        check_settings(cfg, stage)?;
        for c in &stage.criteria {
            if c.kind == CriterionKind::Sufficient {
                match sufficient_stage {
                    Some(s) if s != stage.kind => {
                        return Err(Error::MultipleSufficientStages(s.to_string(), stage.kind.to_string()))
                    }
                    _ => sufficient_stage = Some(stage.kind),
                }
            }
            let (owner, local) = resolve_stat(stage.kind, &c.stat);
            match position(owner) {
                None => {
                    return Err(Error::DanglingStatistic { criterion: c.id.clone(), stat: c.stat.clone() });
                }
                Some(j) if j > i => {
                    return Err(Error::LaterStageStatistic {
                        criterion: c.id.clone(),
                        stage: stage.kind.to_string(),
                        later: owner.to_string(),
                    });
                }
                Some(j) => {
                    if !stat_known(&cfg.stages[j], &local) {
                        return Err(Error::DanglingStatistic { criterion: c.id.clone(), stat: c.stat.clone() });
                    }
                }
            }
        }
    }
    Ok(())
}

fn check_settings(cfg: &FunnelConfig, stage: &StageConfig) -> Result<()> {
    let bad = |m: String| Err(Error::Config(format!("stages.{}: {m}", stage.kind)));
    match &stage.settings {
        StageSettings::OfflineValidate(s) => {
            if s.k == 0 {
                return bad("k must be >= 1".into());
            }
            if !(0.0..=1.0).contains(&s.human_coverage) {
                return bad("human_coverage must lie in [0, 1]".into());
            }
            match (s.judgments, &cfg.data) {
                (Some(JudgmentOrigin::Human), DataSource::Logs(_)) => return bad("human judgments need a simulator world".into()),
                (Some(JudgmentOrigin::File), DataSource::Logs(l)) if l.judgments.is_none() => {
                    return bad("judgments = \"file\" needs data.logs.judgments".into())
                }
                (Some(JudgmentOrigin::File), DataSource::World(_)) => return bad("judgments = \"file\" needs [data.logs]".into()),
                _ => {}
            }
        }
        StageSettings::Interleave(s) => {
            if s.n_queries == 0 || s.k == 0 {
                return bad("n_queries and k must be >= 1".into());
            }
        }
        StageSettings::Abtest(a) => a.validate().or_else(|e| bad(e.to_string()))?,
        StageSettings::Bandit(b) => {
            if b.horizon == 0 {
                return bad("horizon must be >= 1".into());
            }
        }
        StageSettings::Bo(b) => {
            if b.base != "control" && b.base != "candidate" {
                return Err(Error::MissingVariant(b.base.clone()));
            }
            if b.mode == BoMode::Offline && b.target_proportion.is_none() {
                return bad("offline mode needs target_proportion".into());
            }
            if b.mode == BoMode::Online {
                b.abtest.validate().or_else(|e| bad(e.to_string()))?;
            }
        }
        StageSettings::ReconstructionQuality | StageSettings::OfflineVerify(_) => {}
    }
    Ok(())
}

fn one_of(s: &str, options: &[&str]) -> bool {
    options.contains(&s)
}

const WD_FIELDS: [&str; 3] = ["width", "n_queries", "n_changed"];
const SUMMARY_FIELDS: [&str; 4] = ["mean", "p25", "p50", "p75"];

fn width_depth_stat(path: &str) -> bool {
    if one_of(path, &WD_FIELDS) {
        return true;
    }
    match path.split_once('.') {
        Some((name, field)) => one_of(name, &["depth_jaccard", "depth_spearman"]) && one_of(field, &SUMMARY_FIELDS),
        None => false,
    }
}

/// Whether `stage` can produce the stage-local statistic `path`.
pub fn stat_known(stage: &StageConfig, path: &str) -> bool {
    let parts: Vec<&str> = path.splitn(2, '.').collect();
    let (head, tail) = (parts[0], parts.get(1).copied().unwrap_or(""));
    match &stage.settings {
        StageSettings::ReconstructionQuality => {
            one_of(path, &["mean_jaccard", "mean_spearman", "exact_match_rate", "n_queries"])
        }
        StageSettings::OfflineVerify(v) => match head {
            "overall" => width_depth_stat(tail),
            "by_success" => tail
                .split_once('.')
                .is_some_and(|(seg, rest)| one_of(seg, &["previously_successful", "previously_unsuccessful"]) && width_depth_stat(rest)),
            "by_attribute" => tail.split_once('=').is_some_and(|(attr, rest)| {
                v.segment_attributes.iter().any(|a| a == attr) && rest.split_once('.').is_some_and(|(_, f)| width_depth_stat(f))
            }),
            _ => false,
        },
        StageSettings::OfflineValidate(_) => {
            if one_of(path, &["judgment_coverage", "overlap"]) {
                return true;
            }
            let p: Vec<&str> = path.split('.').collect();
            match p.as_slice() {
                [side, "judgment_coverage"] => one_of(side, &["control", "candidate"]),
                [side, metric, kind] => {
                    one_of(side, &["control", "candidate", "delta"])
                        && one_of(metric, &["success_at_k", "mrr", "ndcg_at_k"])
                        && one_of(kind, &["raw", "ips_weighted"])
                }
                _ => false,
            }
        }
        StageSettings::Interleave(_) => one_of(
            path,
            &["wins_control", "wins_candidate", "ties", "p_value", "candidate_preferred", "control_preferred", "candidate_win_rate"],
        ),
        StageSettings::Abtest(a) => ab_stat_known(a, path),
        StageSettings::Bandit(_) => {
            one_of(path, &["cumulative_regret", "mean_regret", "best_arm_is_candidate", "candidate_share", "candidate_final_share"])
        }
        StageSettings::Bo(b) => {
            one_of(path, &["best_utility", "flat_surface", "n_evaluations", "best_observed"])
                || path.strip_prefix("best.").is_some_and(|n| b.params.iter().any(|p| p.name == n))
        }
    }
}

fn ab_stat_known(a: &AbConfig, path: &str) -> bool {
    if one_of(path, &["exposure_rate", "n_control", "n_treatment", "stopped_early", "complete"]) {
        return true;
    }
    let p: Vec<&str> = path.split('.').collect();
    match p.as_slice() {
        ["metrics", m, field] => {
            a.metrics.iter().any(|x| x == m)
                && one_of(
                    field,
                    &[
                        "estimate",
                        "std_error",
                        "ci_low",
                        "ci_high",
                        "p_value",
                        "ate_scaled_estimate",
                        "ate_scaled_std_error",
                        "control_mean",
                        "treatment_mean",
                    ],
                )
        }
        ["guardrail", m, field] => {
            METRICS.contains(m) && a.guardrails.iter().any(|x| x == m) && one_of(field, &["harm", "crossed", "crossed_at"])
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[funnel]
stages = ["offline_verify"]
[data]
[data.world]
n_queries = 100
[variants.control]
name = "prod"
weights = [1.0, 0.8, 0.6, 0.4]
[variants.candidate]
name = "new"
weights = [1.0, 0.8, 0.6, 0.4]
"#;

    fn parse(extra: &str) -> Result<FunnelConfig> {
        parse_config(&format!("{BASE}{extra}"), Path::new("."))
    }

    #[test]
    fn minimal_config_loads() {
        let c = parse("").unwrap();
        assert_eq!(c.stages.len(), 1);
        assert_eq!(c.name, "funnel");
        assert_eq!(c.k, 10);
    }

    #[test]
    fn unknown_stage() {
        let text = BASE.replace(r#"["offline_verify"]"#, r#"["offline_verify", "vibes"]"#);
        assert!(matches!(parse_config(&text, Path::new(".")), Err(Error::UnknownStage(s)) if s == "vibes"));
    }

    #[test]
    fn later_stage_statistic_names_both() {
        let text = BASE.replace(r#"["offline_verify"]"#, r#"["offline_verify", "abtest"]"#)
            + r#"
[[stages.offline_verify.criteria]]
id = "peek"
stat = "abtest.metrics.success_rate.estimate"
cmp = ">"
threshold = 0.0
kind = "necessary"
"#;
        let err = parse_config(&text, Path::new(".")).unwrap_err();
        assert!(matches!(&err, Error::LaterStageStatistic { stage, later, .. } if stage == "offline_verify" && later == "abtest"));
        let msg = err.to_string();
        assert!(msg.contains("offline_verify") && msg.contains("abtest"));
    }

    #[test]
    fn dangling_statistic() {
        let err = parse(
            r#"
[[stages.offline_verify.criteria]]
id = "typo"
stat = "overall.widht"
cmp = ">="
threshold = 0.05
kind = "necessary"
"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DanglingStatistic { .. }));
    }

    #[test]
    fn two_sufficient_stages() {
        let text = BASE.replace(r#"["offline_verify"]"#, r#"["reconstruction_quality", "offline_verify"]"#)
            + r#"
[[stages.reconstruction_quality.criteria]]
id = "a"
stat = "exact_match_rate"
cmp = ">="
threshold = 1.0
kind = "sufficient"
[[stages.offline_verify.criteria]]
id = "b"
stat = "overall.width"
cmp = ">="
threshold = 0.1
kind = "sufficient"
"#;
        assert!(matches!(parse_config(&text, Path::new(".")), Err(Error::MultipleSufficientStages(..))));
    }

    #[test]
    fn missing_variant() {
        let text = BASE.replace("[variants.candidate]\nname = \"new\"\nweights = [1.0, 0.8, 0.6, 0.4]\n", "");
        assert!(matches!(parse_config(&text, Path::new(".")), Err(Error::MissingVariant(v)) if v == "candidate"));
    }

    #[test]
    fn segment_and_qualified_stats() {
        let c = parse(
            r#"
[stages.offline_verify]
segment_attributes = ["length_class"]
[[stages.offline_verify.criteria]]
id = "long"
stat = "offline_verify.by_attribute.length_class=long.depth_jaccard.p50"
cmp = "<="
threshold = 0.9
kind = "guardrail"
"#,
        )
        .unwrap();
        assert_eq!(c.stages[0].criteria[0].stage.as_deref(), Some("offline_verify"));
    }
}

//! `funnelkit` command-line interface.
//!
//! Every subcommand reads a funnel TOML file. `funnel` runs the whole
//! configured funnel; the stage subcommands run one stage on its own, with
//! that stage's settings and the criteria that only read its statistics.
//! Data files go under `--out`, a short summary goes to standard output and
//! diagnostics go to standard error.
//!
//! Exit codes: 0 ship or success, 3 rejected by a gate (shortcut exit or no
//! ship), 1 runtime error, 2 usage error.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use funnelkit::funnel::config::DataSource;
use funnelkit::funnel::{emit_report, load_config, run_funnel, DecisionLog, FinalVerdict, FunnelConfig, StageKind};
use funnelkit::logs::write_jsonl;
use funnelkit::offline::{Judgment, JudgmentSource};
use funnelkit::rng::Stream;
use funnelkit::simworld::{generate_world, true_success_rate};
use serde_json::{json, Value};

const EXIT_REJECTED: u8 = 3;

#[derive(Parser)]
#[command(name = "funnelkit", version, about = "Evaluation funnel for search and recommender ranking changes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated world and write its production logs
    Simulate(Common),
    /// Check that logged results are reproduced by counterfactual reconstruction
    ReconstructCheck(Common),
    /// Measure how many queries the candidate changes, and by how much
    Verify(Common),
    /// Score control and candidate on judged relevance metrics
    ValidateOffline(Common),
    /// Run a simulated A/B test with sequential guardrails
    Abtest(Common),
    /// Run a team-draft interleaving experiment
    Interleave(Common),
    /// Run a Thompson-sampling bandit over the configured arms
    Bandit(Common),
    /// Tune candidate parameters with Bayesian optimization
    Bo(Common),
    /// Run every configured stage behind its gates
    Funnel(Common),
}

#[derive(Args)]
struct Common {
    /// Funnel configuration file (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory [default: funnel.out from the config, else ./funnelkit-out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Funnel seed, overriding funnel.seed from the config
    #[arg(long, value_name = "U64", env = "FUNNELKIT_SEED", hide_env_values = true)]
    seed: Option<u64>,
    /// Format of the summary printed to standard output
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads [default: all cores]
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, leaving out causes the outer message already quotes.
fn render(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn dispatch(command: Command) -> Result<ExitCode> {
    let (kind, common) = match command {
        Command::Simulate(c) => return simulate(&c),
        Command::Funnel(c) => return funnel(&c),
        Command::ReconstructCheck(c) => (StageKind::ReconstructionQuality, c),
        Command::Verify(c) => (StageKind::OfflineVerify, c),
        Command::ValidateOffline(c) => (StageKind::OfflineValidate, c),
        Command::Abtest(c) => (StageKind::Abtest, c),
        Command::Interleave(c) => (StageKind::Interleave, c),
        Command::Bandit(c) => (StageKind::Bandit, c),
        Command::Bo(c) => (StageKind::Bo, c),
    };
    single_stage(kind, &common)
}

/// Loads the config and applies the command-line overrides.
fn prepare(c: &Common) -> Result<(FunnelConfig, PathBuf)> {
    if let Some(n) = c.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let mut cfg = load_config(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let out = c.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("funnelkit-out"));
    log::info!("config {} -> {}", c.config.display(), out.display());
    Ok((cfg, out))
}

fn execute(cfg: &FunnelConfig, out: &Path) -> Result<DecisionLog> {
    let log = run_funnel(cfg, out)?;
    emit_report(&log, out)?;
    if let Some(r) = &log.failure_reason {
        match log.final_verdict {
            FinalVerdict::Error => eprintln!("error: stage `{}`: {}", r.stage, r.message),
            _ => eprintln!("{}: {}", log.final_verdict.as_str(), r.message),
        }
    }
    Ok(log)
}

fn exit_code(v: FinalVerdict) -> ExitCode {
    match v {
        FinalVerdict::Ship => ExitCode::SUCCESS,
        FinalVerdict::ShortcutExit | FinalVerdict::NoShip => ExitCode::from(EXIT_REJECTED),
        FinalVerdict::Error => ExitCode::FAILURE,
    }
}

fn funnel(c: &Common) -> Result<ExitCode> {
    let (cfg, out) = prepare(c)?;
    let log = execute(&cfg, &out)?;
    match c.format {
        Format::Json => {
            let stages: Vec<Value> = log
                .stages
                .iter()
                .map(|s| {
                    json!({
                        "stage": s.stage,
                        "verdict": s.verdict,
                        "gates_passed": s.gates.iter().filter(|g| g.passed).count(),
                        "gates": s.gates.len(),
                    })
                })
                .collect();
            print_json(&json!({
                "funnel": log.funnel,
                "final_verdict": log.final_verdict,
                "failure_reason": log.failure_reason.as_ref().map(|r| &r.message),
                "stages": stages,
                "skipped": log.skipped,
            }))?;
        }
        Format::Csv => {
            let mut rows = vec![["stage".to_string(), "verdict".into(), "gates_passed".into(), "gates".into()]];
            for s in &log.stages {
                rows.push([
                    s.stage.to_string(),
                    json_str(json!(s.verdict)),
                    s.gates.iter().filter(|g| g.passed).count().to_string(),
                    s.gates.len().to_string(),
                ]);
            }
            for k in &log.skipped {
                rows.push([k.to_string(), "skipped".into(), "0".into(), "0".into()]);
            }
            rows.push(["final".into(), log.final_verdict.as_str().into(), String::new(), String::new()]);
            print_csv(&rows)?;
        }
    }
    Ok(exit_code(log.final_verdict))
}

fn single_stage(kind: StageKind, c: &Common) -> Result<ExitCode> {
    let (cfg, out) = prepare(c)?;
    let cfg = cfg.single_stage(kind).with_context(|| format!("preparing stage `{kind}`"))?;
    let log = execute(&cfg, &out)?;
    let Some(record) = log.stage(kind) else {
        bail!("stage `{kind}` produced no record");
    };
    match c.format {
        Format::Json => print_json(&json!({
            "stage": kind,
            "verdict": record.verdict,
            "final_verdict": log.final_verdict,
            "statistics": record.statistics,
            "artifacts": record.artifacts,
        }))?,
        Format::Csv => {
            let mut rows = vec![["statistic".to_string(), "value".to_string()]];
            rows.extend(record.statistics.iter().map(|(k, v)| [k.clone(), v.map(|x| x.to_string()).unwrap_or_default()]));
            print_csv(&rows)?;
        }
    }
    Ok(exit_code(log.final_verdict))
}

fn simulate(c: &Common) -> Result<ExitCode> {
    let (cfg, out) = prepare(c)?;
    let DataSource::World(wc) = &cfg.data else {
        bail!("simulate needs [data.world] in {}", c.config.display());
    };
    let world = generate_world(wc)?;
    let control = cfg.control.scorer();
    let (records, interactions) = world.simulate_log(&control, cfg.k, Stream::root(cfg.seed).child("log"))?;
    let judgments: Vec<Judgment> = world
        .queries
        .iter()
        .flat_map(|q| {
            q.candidates.iter().zip(&q.grades).map(|(cand, &g)| Judgment {
                query_id: q.context.query_id.clone(),
                item: cand.item.clone(),
                relevance: g,
                source: JudgmentSource::Human,
                rank: None,
            })
        })
        .collect();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_jsonl(&out.join("counterfactual.jsonl"), &records)?;
    write_jsonl(&out.join("interactions.jsonl"), &interactions)?;
    write_jsonl(&out.join("judgments.jsonl"), &judgments)?;

    let succeeded: HashSet<&str> = interactions.iter().filter(|i| i.success).map(|i| i.query_id.as_str()).collect();
    let logged = succeeded.len() as f64 / records.len().max(1) as f64;
    let stats: Vec<(String, f64)> = vec![
        ("queries".into(), records.len() as f64),
        ("interactions".into(), interactions.len() as f64),
        ("judgments".into(), judgments.len() as f64),
        ("logged_success_rate".into(), logged),
        ("true_success_rate.control".into(), true_success_rate(&world, &control, cfg.k)?),
        ("true_success_rate.candidate".into(), true_success_rate(&world, &cfg.candidate.scorer(), cfg.k)?),
    ];
    match c.format {
        Format::Json => {
            let map: serde_json::Map<String, Value> = stats.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            print_json(&Value::Object(map))?;
        }
        Format::Csv => {
            let mut rows = vec![["statistic".to_string(), "value".to_string()]];
            rows.extend(stats.iter().map(|(k, v)| [k.clone(), v.to_string()]));
            print_csv(&rows)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn json_str(v: Value) -> String {
    match v {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

fn print_json(v: &Value) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, v)?;
    writeln!(stdout)?;
    Ok(())
}

fn print_csv<const N: usize>(rows: &[[String; N]]) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
        writeln!(stdout, "{}", cells.join(","))?;
    }
    Ok(())
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 9] =
    ["simulate", "reconstruct-check", "verify", "validate-offline", "abtest", "interleave", "bandit", "bo", "funnel"];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_funnelkit"));
    c.env_remove("FUNNELKIT_SEED").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join(format!("../../configs/{name}.toml"))
        .to_string_lossy()
        .into_owned()
}

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Set `FUNNELKIT_BLESS=1` to rewrite the golden files.
#[test]
fn help_matches_golden_files() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let bless = std::env::var_os("FUNNELKIT_BLESS").is_some();
    for sub in std::iter::once("funnelkit").chain(SUBCOMMANDS) {
        let out = if sub == "funnelkit" { run(&["--help"]) } else { run(&[sub, "--help"]) };
        assert!(out.status.success(), "{sub}");
        let text = String::from_utf8(out.stdout).unwrap();
        let path = dir.join(format!("{sub}.txt"));
        if bless {
            fs::write(&path, &text).unwrap();
        } else {
            assert_eq!(fs::read_to_string(&path).unwrap(), text, "{sub} --help drifted");
        }
        if sub != "funnelkit" {
            for flag in ["--config", "--out", "--seed", "--format", "--threads", "FUNNELKIT_SEED"] {
                assert!(text.contains(flag), "{sub} --help lacks {flag}");
            }
        }
    }
}

#[test]
fn ship_fixture_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["funnel", "--config", &config("ship"), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["final_verdict"], "ship");
    assert!(tmp.path().join("decision.json").is_file());
}

#[test]
fn width_zero_candidate_exits_three_with_decision_log() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["funnel", "--config", &config("shortcut_verify"), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let decision = fs::read_to_string(tmp.path().join("decision.json")).unwrap();
    assert!(decision.contains("\"shortcut_exit\""));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changes-enough-queries"));
}

#[test]
fn missing_config_exits_one_naming_the_path() {
    let out = run(&["funnel", "--config", "/definitely/not/here.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/not/here.toml"));
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["funnel", "--config", "x.toml", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["funnel"]).status.code(), Some(2));
    assert_eq!(run(&["funnel", "--config", "x.toml", "--format", "xml"]).status.code(), Some(2));
}

#[test]
fn same_argv_gives_identical_files_at_any_thread_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config("guardrail_abort");
    let x = run(&["funnel", "--config", &cfg, "--out", a.path().to_str().unwrap(), "--threads", "1"]);
    let y = run(&["funnel", "--config", &cfg, "--out", b.path().to_str().unwrap(), "--threads", "3"]);
    assert_eq!(x.status.code(), Some(3));
    assert_eq!(x.stdout, y.stdout);
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(!fa.is_empty());
    assert!(fa == fb);
}

#[test]
fn seed_flag_and_environment_fallback_agree() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config("shortcut_verify");
    run(&["funnel", "--config", &cfg, "--out", a.path().to_str().unwrap(), "--seed", "77"]);
    bin().args(["funnel", "--config", &cfg, "--out", b.path().to_str().unwrap()]).env("FUNNELKIT_SEED", "77").output().unwrap();
    run(&["funnel", "--config", &cfg, "--out", c.path().to_str().unwrap()]);
    let read = |d: &Path| fs::read_to_string(d.join("decision.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert!(read(a.path()).contains("\"seed\": 77"));
    assert_ne!(read(a.path()), read(c.path()));
}

#[test]
fn simulated_logs_feed_the_offline_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let logs = tmp.path().join("logs");
    let out = run(&["simulate", "--config", &config("ship"), "--out", logs.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("statistic,value\nqueries,2000\n"), "{csv}");
    for f in ["counterfactual.jsonl", "interactions.jsonl", "judgments.jsonl"] {
        assert!(logs.join(f).is_file(), "{f}");
    }

    let cfg = tmp.path().join("offline.toml");
    fs::write(
        &cfg,
        r#"
[funnel]
stages = ["reconstruction_quality", "offline_verify", "offline_validate"]
[data]
k = 10
[data.logs]
counterfactual = "logs/counterfactual.jsonl"
interactions = "logs/interactions.jsonl"
judgments = "logs/judgments.jsonl"
[variants.control]
name = "prod"
weights = [1.0, 0.3, 0.3, 0.3]
[variants.candidate]
name = "balanced"
weights = [1.0, 1.0, 1.0, 1.0]
[[stages.reconstruction_quality.criteria]]
id = "faithful"
stat = "exact_match_rate"
cmp = ">="
threshold = 1.0
kind = "necessary"
"#,
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let rq = run(&["reconstruct-check", "--config", cfg, "--out", tmp.path().join("rq").to_str().unwrap()]);
    assert_eq!(rq.status.code(), Some(0), "{}", String::from_utf8_lossy(&rq.stderr));
    let v: serde_json::Value = serde_json::from_slice(&rq.stdout).unwrap();
    assert_eq!(v["statistics"]["exact_match_rate"], 1.0);

    let val = run(&["validate-offline", "--config", cfg, "--out", tmp.path().join("val").to_str().unwrap(), "--format", "csv"]);
    assert_eq!(val.status.code(), Some(0), "{}", String::from_utf8_lossy(&val.stderr));
    assert!(String::from_utf8(val.stdout).unwrap().lines().any(|l| l.starts_with("delta.ndcg_at_k.raw,")));
}

#[test]
fn online_stage_on_logged_data_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        r#"
[funnel]
stages = ["offline_verify"]
[data.logs]
counterfactual = "cf.jsonl"
[variants.control]
name = "a"
weights = [1.0]
[variants.candidate]
name = "b"
weights = [2.0]
"#,
    )
    .unwrap();
    let out = run(&["abtest", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[data.world]"));
}

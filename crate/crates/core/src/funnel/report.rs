use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::{DecisionLog, FinalVerdict, StageVerdict};
use crate::chart::BarChart;
use crate::error::{Error, Result};
use crate::gates::GateOutcome;

/// Top-level files owned by the report writer.
pub const REPORT_FILES: [&str; 3] = ["decision.json", "summary.md", "funnel.svg"];

fn fmt_observed(g: &GateOutcome) -> String {
    g.observed.map_or("undefined".into(), |o| format!("{o:.6}"))
}

fn gate_line(g: &GateOutcome) -> String {
    format!(
        "| `{}` | {} | `{}` | {} | {} {} | {} |",
        g.criterion_id,
        g.kind,
        g.stat,
        fmt_observed(g),
        g.comparator.symbol(),
        g.threshold,
        if g.passed { "pass" } else { "FAIL" }
    )
}

pub fn summary_markdown(log: &DecisionLog) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Funnel `{}`: {}\n", log.funnel, log.final_verdict.as_str());
    let _ = writeln!(s, "Control `{}` vs candidate `{}`, seed {}.\n", log.control, log.candidate, log.seed);
    match log.final_verdict {
        FinalVerdict::Ship => {
            let _ = writeln!(s, "Every gate passed; the candidate ships. Passed gates:\n");
            for st in &log.stages {
                for g in &st.gates {
                    let _ = writeln!(
                        s,
                        "- `{}` ({}, stage `{}`): {} {} {}, observed {}",
                        g.criterion_id,
                        g.kind,
                        st.stage,
                        g.stat,
                        g.comparator.symbol(),
                        g.threshold,
                        fmt_observed(g)
                    );
                }
            }
            s.push('\n');
        }
        _ => {
            if let Some(r) = &log.failure_reason {
                let _ = writeln!(s, "Exit at stage `{}`.\n", r.stage);
                if let Some(g) = &r.gate {
                    let _ = writeln!(s, "Failed criterion: `{}`\n", g.criterion_id);
                }
                let _ = writeln!(s, "> {}\n", r.message);
            }
        }
    }
    s.push_str("## Stages\n\n");
    for (i, st) in log.stages.iter().enumerate() {
        let verdict = match st.verdict {
            StageVerdict::Advance => "advance",
            StageVerdict::ShortcutExit => "shortcut_exit",
            StageVerdict::Ship => "ship",
            StageVerdict::Error => "error",
        };
        let _ = writeln!(s, "### {}. `{}`: {verdict}\n", i + 1, st.stage);
        if let Some(e) = &st.error {
            let _ = writeln!(s, "Error: {e}\n");
        }
        if !st.gates.is_empty() {
            s.push_str("| criterion | kind | statistic | observed | threshold | result |\n");
            s.push_str("|---|---|---|---|---|---|\n");
            for g in &st.gates {
                s.push_str(&gate_line(g));
                s.push('\n');
            }
            s.push('\n');
        }
        for n in &st.notes {
            let _ = writeln!(s, "- {n}");
        }
        if !st.notes.is_empty() {
            s.push('\n');
        }
        if !st.artifacts.is_empty() {
            let links: Vec<String> = st.artifacts.iter().map(|a| format!("[{a}]({a})")).collect();
            let _ = writeln!(s, "Artifacts: {}\n", links.join(", "));
        }
    }
    if !log.skipped.is_empty() {
        let names: Vec<String> = log.skipped.iter().map(|k| format!("`{k}`")).collect();
        let _ = writeln!(s, "Skipped: {}\n", names.join(", "));
    }
    s
}

/// Writes `decision.json`, `summary.md` and `funnel.svg` into `out`.
pub fn emit_report(log: &DecisionLog, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, body: String| {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("decision.json", serde_json::to_string_pretty(log)? + "\n")?;
    write("summary.md", summary_markdown(log))?;
    let chart = BarChart {
        title: format!("Gates passed per stage ({})", log.final_verdict.as_str()),
        y_label: "share of gates passed".into(),
        bars: log
            .stages
            .iter()
            .map(|st| {
                let n = st.gates.len();
                let passed = st.gates.iter().filter(|g| g.passed).count();
                let v = if n == 0 { f64::from(u8::from(st.error.is_none())) } else { passed as f64 / n as f64 };
                (st.stage.to_string(), v)
            })
            .collect(),
        threshold: Some(1.0),
    };
    write("funnel.svg", chart.to_svg())
}

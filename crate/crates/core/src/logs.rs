//! JSONL log reading and writing.
//!
//! One JSON object per line, UTF-8. Blank lines are skipped. Every error
//! names the 1-based line it came from.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::offline::Judgment;
use crate::types::{CounterfactualRecord, Interaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogSchema {
    Counterfactual,
    Interaction,
    Judgment,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogRecords {
    Counterfactual(Vec<CounterfactualRecord>),
    Interaction(Vec<Interaction>),
    Judgment(Vec<Judgment>),
}

impl LogRecords {
    pub fn len(&self) -> usize {
        match self {
            LogRecords::Counterfactual(r) => r.len(),
            LogRecords::Interaction(r) => r.len(),
            LogRecords::Judgment(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn parse_log(path: &Path, schema: LogSchema) -> Result<LogRecords> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_log_str(&text, schema)
}

pub fn parse_log_str(text: &str, schema: LogSchema) -> Result<LogRecords> {
    Ok(match schema {
        LogSchema::Counterfactual => LogRecords::Counterfactual(parse_counterfactual_str(text)?),
        LogSchema::Interaction => LogRecords::Interaction(parse_interactions_str(text)?),
        LogSchema::Judgment => LogRecords::Judgment(parse_judgments_str(text)?),
    })
}

pub fn read_counterfactual(path: &Path) -> Result<Vec<CounterfactualRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_counterfactual_str(&text)
}

pub fn read_interactions(path: &Path) -> Result<Vec<Interaction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions_str(&text)
}

pub fn read_judgments(path: &Path) -> Result<Vec<Judgment>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_judgments_str(&text)
}

fn lines<T: DeserializeOwned>(text: &str) -> impl Iterator<Item = Result<(usize, T)>> + '_ {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 1;
            serde_json::from_str::<T>(l)
                .map(|v| (line, v))
                .map_err(|e| Error::MalformedLine {
                    line,
                    message: e.to_string(),
                })
        })
}

pub fn parse_counterfactual_str(text: &str) -> Result<Vec<CounterfactualRecord>> {
    let mut out = Vec::new();
    let mut seen_queries = HashSet::new();
    let mut dim: Option<usize> = None;
    for parsed in lines::<CounterfactualRecord>(text) {
        let (line, rec) = parsed?;
        check_counterfactual(&rec, line, &mut dim)?;
        if !seen_queries.insert(rec.context.query_id.clone()) {
            return Err(Error::invalid(
                line,
                "context.query_id",
                format!("duplicate query_id `{}`", rec.context.query_id),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

fn check_counterfactual(rec: &CounterfactualRecord, line: usize, dim: &mut Option<usize>) -> Result<()> {
    if rec.context.query_id.is_empty() {
        return Err(Error::invalid(line, "context.query_id", "empty"));
    }
    if rec.context.timestamp < 0 {
        return Err(Error::invalid(line, "context.timestamp", "negative timestamp"));
    }
    if rec.served_variant.name.is_empty() {
        return Err(Error::invalid(line, "served_variant.name", "empty"));
    }
    if rec.served_variant.parameters.values().any(|v| !v.is_finite()) {
        return Err(Error::invalid(line, "served_variant.parameters", "non-finite value"));
    }
    if rec.candidates.is_empty() {
        return Err(Error::invalid(line, "candidates", "no candidates"));
    }
    let mut items = HashSet::new();
    for c in &rec.candidates {
        if c.item.0.is_empty() {
            return Err(Error::invalid(line, "candidates.item", "empty item id"));
        }
        if !items.insert(&c.item) {
            return Err(Error::invalid(line, "candidates", format!("duplicate item `{}`", c.item)));
        }
        if c.features.iter().any(|f| !f.is_finite()) {
            return Err(Error::invalid(line, "candidates.features", "non-finite feature"));
        }
        match *dim {
            None => *dim = Some(c.features.len()),
            Some(d) if d != c.features.len() => {
                return Err(Error::invalid(
                    line,
                    "candidates.features",
                    format!("dimension {} differs from log dimension {d}", c.features.len()),
                ))
            }
            _ => {}
        }
    }
    rec.served_results
        .check()
        .map_err(|m| Error::invalid(line, "served_results", m))?;
    if rec.served_results.len() > rec.candidates.len() {
        return Err(Error::invalid(line, "served_results", "longer than candidate list"));
    }
    if let Some(missing) = rec.served_results.items.iter().find(|i| !items.contains(i)) {
        return Err(Error::invalid(
            line,
            "served_results",
            format!("item `{missing}` is not a candidate"),
        ));
    }
    Ok(())
}

pub fn parse_interactions_str(text: &str) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for parsed in lines::<Interaction>(text) {
        let (line, it) = parsed?;
        if it.rank < 1 {
            return Err(Error::invalid(line, "rank", "rank must be >= 1"));
        }
        if it.item.0.is_empty() {
            return Err(Error::invalid(line, "item", "empty item id"));
        }
        if it.success && it.action == crate::types::Action::None {
            return Err(Error::invalid(line, "success", "success requires an action"));
        }
        out.push(it);
    }
    Ok(out)
}

pub fn parse_judgments_str(text: &str) -> Result<Vec<Judgment>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for parsed in lines::<Judgment>(text) {
        let (line, j) = parsed?;
        if j.item.0.is_empty() {
            return Err(Error::invalid(line, "item", "empty item id"));
        }
        if j.rank == Some(0) {
            return Err(Error::invalid(line, "rank", "rank must be >= 1"));
        }
        if !seen.insert((j.query_id.clone(), j.item.clone(), j.source)) {
            return Err(Error::invalid(
                line,
                "item",
                format!("duplicate judgment for ({}, {})", j.query_id, j.item),
            ));
        }
        out.push(j);
    }
    Ok(out)
}

/// Serializes records one per line, in order.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let text = to_jsonl(records)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const REC: &str = r#"{"context":{"query_id":"Q","user_id":"u1","query_text":"t","timestamp":5,"attributes":{"length_class":"long"}},"candidates":[{"item":"a","features":[1.0,0.5]},{"item":"b","features":[0.0,2.0]}],"served_variant":{"name":"prod","parameters":{}},"served_results":{"items":["a","b"],"k":2}}"#;

    fn rec_line(qid: &str) -> String {
        REC.replace("\"Q\"", &format!("\"{qid}\""))
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_log_str("", LogSchema::Counterfactual).unwrap().is_empty());
        assert!(parse_log_str("\n\n", LogSchema::Interaction).unwrap().is_empty());
    }

    #[test]
    fn valid_lines_keep_file_order() {
        let text = [rec_line("q1"), rec_line("q2"), rec_line("q3")].join("\n");
        let recs = parse_counterfactual_str(&text).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.context.query_id.as_str()).collect();
        assert_eq!(ids, ["q1", "q2", "q3"]);
    }

    #[test]
    fn duplicate_served_item_names_line() {
        let bad = rec_line("q2").replace(r#""items":["a","b"]"#, r#""items":["a","a"]"#);
        let text = [rec_line("q1"), bad].join("\n");
        let err = parse_counterfactual_str(&text).unwrap_err().to_string();
        assert!(err.contains("duplicate item"), "{err}");
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("served_results"), "{err}");
    }

    #[test]
    fn malformed_json_names_line() {
        let text = format!("{}\n{{not json\n", rec_line("q1"));
        let err = parse_counterfactual_str(&text).unwrap_err().to_string();
        assert!(err.starts_with("line 2: malformed JSON"), "{err}");
    }

    #[test]
    fn dimension_mismatch_across_lines() {
        let other = rec_line("q2").replace("[1.0,0.5]", "[1.0]").replace("[0.0,2.0]", "[0.0]");
        let err = parse_counterfactual_str(&[rec_line("q1"), other].join("\n")).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn served_item_must_be_candidate() {
        let bad = rec_line("q1").replace(r#""items":["a","b"]"#, r#""items":["a","z"]"#);
        let err = parse_counterfactual_str(&bad).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("not a candidate"), "{err}");
    }

    #[test]
    fn interaction_invariants() {
        let ok = r#"{"query_id":"q","item":"a","rank":3,"action":"click","success":true}"#;
        assert_eq!(parse_interactions_str(ok).unwrap().len(), 1);
        let rank0 = ok.replace("\"rank\":3", "\"rank\":0");
        assert!(parse_interactions_str(&rank0).unwrap_err().to_string().contains("`rank`"));
        let none = ok.replace("click", "none");
        let err = parse_interactions_str(&format!("{ok}\n{none}")).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("`success`"), "{err}");
    }

    #[test]
    fn duplicate_judgment_rejected() {
        let j = r#"{"query_id":"q","item":"a","relevance":2,"source":"human"}"#;
        let llm = j.replace("human", "llm");
        assert_eq!(parse_judgments_str(&format!("{j}\n{llm}")).unwrap().len(), 2);
        let err = parse_judgments_str(&format!("{j}\n{j}")).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}

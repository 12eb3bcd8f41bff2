//! Converts the flat pair-table layout of the released dataset into [`CommitRecord`]s.
//!
//! Each input line is one (generated, edited) message pair of a commit:
//!
//! ```json
//! {"hash": "...", "G_text": "...", "E_text": "...", "G_type": "initial",
//!  "E_type": "expert_labeled", "is_related": true,
//!  "original_message": "...", "diff": "...", "summary": "..."}
//! ```
//!
//! Expert-only rows may instead carry `commit_msg_start` / `commit_msg_end`, which are
//! read as an initial G and an expert E. Messages are deduplicated by (source, text)
//! within a commit, and related rows become derivation edges. Unrelated rows only
//! contribute nodes.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::Deserialize;

use super::{
    CommitRecord, Corpus, CorpusError, DerivationEdge, DerivationMethod, MessageNode, NodeSource,
};

#[derive(Debug, Deserialize)]
struct PairRow {
    hash: String,
    #[serde(default, alias = "commit_msg_start")]
    #[serde(rename = "G_text")]
    g_text: Option<String>,
    #[serde(default, alias = "commit_msg_end")]
    #[serde(rename = "E_text")]
    e_text: Option<String>,
    #[serde(default, rename = "G_type")]
    g_type: Option<String>,
    #[serde(default, rename = "E_type")]
    e_type: Option<String>,
    #[serde(default)]
    is_related: Option<bool>,
    #[serde(default, alias = "reference")]
    original_message: Option<String>,
    #[serde(default, alias = "mods")]
    diff: Option<serde_json::Value>,
    #[serde(default)]
    summary: Option<String>,
}

fn generated_source(label: Option<&str>) -> Result<NodeSource, String> {
    match label.unwrap_or("initial") {
        "initial" | "model" | "generated" => Ok(NodeSource::Model),
        "synthetic_backward" | "synthetic-backward" | "backward" => {
            Ok(NodeSource::SyntheticBackward)
        }
        other => Err(format!("unknown G_type {other:?}")),
    }
}

fn edited_source(label: Option<&str>) -> Result<NodeSource, String> {
    match label.unwrap_or("expert_labeled") {
        "expert_labeled" | "expert-labeled" | "expert" => Ok(NodeSource::Expert),
        "synthetic_forward" | "synthetic-forward" | "forward" => Ok(NodeSource::SyntheticForward),
        other => Err(format!("unknown E_type {other:?}")),
    }
}

fn diff_text(value: serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s,
        serde_json::Value::Array(items) => items
            .into_iter()
            .map(|item| match item {
                serde_json::Value::Object(map) => map
                    .get("diff")
                    .and_then(|d| d.as_str())
                    .unwrap_or_default()
                    .to_string(),
                other => other.as_str().unwrap_or_default().to_string(),
            })
            .collect::<Vec<_>>()
            .join("\n"),
        _ => String::new(),
    }
}

#[derive(Default)]
struct Builder {
    record: Option<CommitRecord>,
    ids: BTreeMap<(NodeSource, String), String>,
    counters: BTreeMap<NodeSource, usize>,
}

impl Builder {
    fn node(&mut self, source: NodeSource, text: &str) -> String {
        if let Some(id) = self.ids.get(&(source, text.to_string())) {
            return id.clone();
        }
        let counter = self.counters.entry(source).or_default();
        let id = format!("{}-{}", source.as_str(), counter);
        *counter += 1;
        self.ids.insert((source, text.to_string()), id.clone());
        let record = self.record.as_mut().expect("record initialised");
        record
            .nodes
            .push(MessageNode::new(id.clone(), source, text));
        id
    }
}

pub fn import_pair_table(reader: impl BufRead) -> Result<Corpus, CorpusError> {
    let mut builders: BTreeMap<String, Builder> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: format!("line {line_no}"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PairRow = serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
            line: line_no,
            source,
        })?;
        let bad = |field: &str, message: String| CorpusError::Invalid {
            commit_id: row.hash.clone(),
            field: format!("line {line_no}: {field}"),
            message,
        };
        let g_source = generated_source(row.g_type.as_deref()).map_err(|m| bad("G_type", m))?;
        let e_source = edited_source(row.e_type.as_deref()).map_err(|m| bad("E_type", m))?;
        let g_text = row.g_text.clone().filter(|t| !t.is_empty());
        let e_text = row.e_text.clone().filter(|t| !t.is_empty());

        let builder = builders.entry(row.hash.clone()).or_insert_with(|| {
            order.push(row.hash.clone());
            Builder::default()
        });
        let record = builder.record.get_or_insert_with(|| CommitRecord {
            commit_id: row.hash.clone(),
            diff: String::new(),
            original_message: String::new(),
            summary: None,
            nodes: Vec::new(),
            edges: Vec::new(),
        });
        if record.diff.is_empty() {
            if let Some(d) = row.diff.clone() {
                record.diff = diff_text(d);
            }
        }
        if record.original_message.is_empty() {
            if let Some(o) = &row.original_message {
                record.original_message = o.clone();
            }
        }
        if record.summary.is_none() {
            record.summary = row.summary.clone();
        }

        let g = g_text.map(|t| builder.node(g_source, &t));
        let e = e_text.map(|t| builder.node(e_source, &t));
        if let (Some(g), Some(e), true) = (g, e, row.is_related.unwrap_or(true)) {
            let edge = match (g_source, e_source) {
                (NodeSource::SyntheticBackward, NodeSource::Expert) => {
                    DerivationEdge::new(e, g, DerivationMethod::LlmBackward)
                }
                (_, NodeSource::SyntheticForward) => {
                    DerivationEdge::new(g, e, DerivationMethod::LlmForward)
                }
                _ => DerivationEdge::new(g, e, DerivationMethod::HumanEdit),
            };
            let record = builder.record.as_mut().expect("record initialised");
            if !record.edges.contains(&edge) {
                record.edges.push(edge);
            }
        }
    }

    let records = order
        .into_iter()
        .filter_map(|hash| builders.remove(&hash).and_then(|b| b.record))
        .collect();
    Corpus::new(records)
}

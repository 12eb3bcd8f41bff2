//! Correlating offline metrics with the online edit-effort signal.
//!
//! For each generated message the online score is the mean of the online metric over its
//! related edits, and the offline score aggregates the candidate metric over its
//! conditionally independent references (max when higher is better, min otherwise). Q is
//! the Spearman correlation of the two, pooled over all generated messages of the corpus.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{derive_pairs, Corpus, PairPolicy, PairSet};
use crate::par::ExecMode;
use crate::stats::{spearman, CorrelationResult, StatsError};
use crate::textmetrics::{MetricError, PairMetric, Polarity};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("metric {metric} failed on commit {commit_id}: {source}")]
    Metric {
        metric: String,
        commit_id: String,
        #[source]
        source: MetricError,
    },
    #[error("Q({offline}) against online {online}: {source}")]
    Stats {
        offline: String,
        online: String,
        #[source]
        source: StatsError,
    },
    #[error("pair set for unknown commit {0:?}")]
    UnknownCommit(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeKey {
    pub commit_id: String,
    pub node_id: String,
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.commit_id, self.node_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    NoRelatedPair,
    NoIndependentReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub node: NodeKey,
    pub reason: ExclusionReason,
}

/// Per generated node scores, plus the nodes that could not be scored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeScores {
    pub scores: BTreeMap<NodeKey, f64>,
    pub excluded: Vec<Exclusion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub policy: PairPolicy,
    pub include_original: bool,
    pub exec: ExecMode,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            policy: PairPolicy::Direct,
            include_original: true,
            exec: ExecMode::default(),
        }
    }
}

pub fn pair_sets(corpus: &Corpus, config: &SelectionConfig) -> Vec<PairSet> {
    corpus
        .records()
        .iter()
        .map(|r| derive_pairs(r, config.policy, config.include_original))
        .collect()
}

/// Every generated node of every commit, in corpus order.
fn generated_nodes<'a>(
    corpus: &'a Corpus,
    pairs: &'a [PairSet],
) -> Result<Vec<(usize, &'a PairSet, NodeKey)>, SelectionError> {
    let mut out = Vec::new();
    for set in pairs {
        let (idx, record) = corpus
            .records()
            .iter()
            .enumerate()
            .find(|(_, r)| r.commit_id == set.commit_id)
            .ok_or_else(|| SelectionError::UnknownCommit(set.commit_id.clone()))?;
        for node in record.generated() {
            out.push((
                idx,
                set,
                NodeKey {
                    commit_id: record.commit_id.clone(),
                    node_id: node.node_id.clone(),
                },
            ));
        }
    }
    Ok(out)
}

fn collect(
    results: Vec<(NodeKey, Result<Option<f64>, SelectionError>)>,
    reason: ExclusionReason,
) -> Result<NodeScores, SelectionError> {
    let mut scores = NodeScores::default();
    for (key, result) in results {
        match result? {
            Some(v) => {
                scores.scores.insert(key, v);
            }
            None => {
                log::warn!("excluding {key}: {reason:?}");
                scores.excluded.push(Exclusion { node: key, reason });
            }
        }
    }
    Ok(scores)
}

/// Mean of `online` over each generated node's related edits.
pub fn online_scores(
    corpus: &Corpus,
    pairs: &[PairSet],
    online: &dyn PairMetric,
    exec: ExecMode,
) -> Result<NodeScores, SelectionError> {
    let nodes = generated_nodes(corpus, pairs)?;
    let results = exec.map(&nodes, |(idx, set, key)| {
        let record = &corpus.records()[*idx];
        let g = record.node(&key.node_id).expect("generated node of record");
        let mut values = Vec::new();
        for e in set.related_of(&key.node_id) {
            let e = record.node(e).expect("pair endpoints come from the record");
            let v = online
                .score(&g.text, &e.text)
                .map_err(|source| SelectionError::Metric {
                    metric: online.name(),
                    commit_id: key.commit_id.clone(),
                    source,
                })?;
            values.push(v);
        }
        Ok(if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        })
    });
    collect(
        nodes.into_iter().map(|(_, _, k)| k).zip(results).collect(),
        ExclusionReason::NoRelatedPair,
    )
}

/// Best value of `metric` over each generated node's independent references.
pub fn offline_scores(
    corpus: &Corpus,
    pairs: &[PairSet],
    metric: &dyn PairMetric,
    exec: ExecMode,
) -> Result<NodeScores, SelectionError> {
    let nodes = generated_nodes(corpus, pairs)?;
    let polarity = metric.polarity();
    let results = exec.map(&nodes, |(idx, set, key)| {
        let record = &corpus.records()[*idx];
        let g = record.node(&key.node_id).expect("generated node of record");
        let mut best: Option<f64> = None;
        for reference in set.independent_of(&key.node_id) {
            let text = reference
                .text(record)
                .expect("pair endpoints come from the record");
            let v = metric
                .score(&g.text, text)
                .map_err(|source| SelectionError::Metric {
                    metric: metric.name(),
                    commit_id: key.commit_id.clone(),
                    source,
                })?;
            best = Some(match (best, polarity) {
                (None, _) => v,
                (Some(b), Polarity::HigherBetter) => b.max(v),
                (Some(b), Polarity::LowerBetter) => b.min(v),
            });
        }
        Ok(best)
    });
    collect(
        nodes.into_iter().map(|(_, _, k)| k).zip(results).collect(),
        ExclusionReason::NoIndependentReference,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QResult {
    pub offline: String,
    pub online: String,
    pub correlation: CorrelationResult,
    /// Nodes left out because one of the two scores is missing.
    pub excluded: Vec<Exclusion>,
}

/// Pairs the two score maps by node and correlates them.
pub fn correlate(
    offline_name: &str,
    online_name: &str,
    online: &NodeScores,
    offline: &NodeScores,
) -> Result<QResult, SelectionError> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (key, on) in &online.scores {
        if let Some(off) = offline.scores.get(key) {
            x.push(*on);
            y.push(*off);
        }
    }
    let mut excluded: Vec<Exclusion> = online
        .excluded
        .iter()
        .chain(&offline.excluded)
        .cloned()
        .collect();
    excluded.sort_by(|a, b| a.node.cmp(&b.node));
    let correlation = spearman(&x, &y).map_err(|source| SelectionError::Stats {
        offline: offline_name.to_string(),
        online: online_name.to_string(),
        source,
    })?;
    Ok(QResult {
        offline: offline_name.to_string(),
        online: online_name.to_string(),
        correlation,
        excluded,
    })
}

/// Q*(offline, online); with edit distance as the online metric this is Q(offline).
pub fn q_metric(
    corpus: &Corpus,
    pairs: &[PairSet],
    offline: &dyn PairMetric,
    online: &dyn PairMetric,
    exec: ExecMode,
) -> Result<QResult, SelectionError> {
    let on = online_scores(corpus, pairs, online, exec)?;
    let off = offline_scores(corpus, pairs, offline, exec)?;
    correlate(&offline.name(), &online.name(), &on, &off)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub offline: String,
    pub online: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `entries[i][j]` correlates offline metric `i` with online metric `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QMatrix {
    pub metrics: Vec<String>,
    pub entries: Vec<Vec<MatrixEntry>>,
}

impl QMatrix {
    pub fn get(&self, offline: &str, online: &str) -> Option<&MatrixEntry> {
        let i = self.metrics.iter().position(|m| m == offline)?;
        let j = self.metrics.iter().position(|m| m == online)?;
        Some(&self.entries[i][j])
    }
}

/// Q* for every ordered pair of `metrics`. Each metric is scored once per role; an entry
/// whose correlation is undefined records the error instead of failing the matrix.
pub fn q_matrix(
    corpus: &Corpus,
    pairs: &[PairSet],
    metrics: &[&dyn PairMetric],
    exec: ExecMode,
) -> Result<QMatrix, SelectionError> {
    let online: Vec<NodeScores> = metrics
        .iter()
        .map(|m| online_scores(corpus, pairs, *m, exec))
        .collect::<Result<_, _>>()?;
    let offline: Vec<NodeScores> = metrics
        .iter()
        .map(|m| offline_scores(corpus, pairs, *m, exec))
        .collect::<Result<_, _>>()?;
    let names: Vec<String> = metrics.iter().map(|m| m.name()).collect();
    let cells: Vec<(usize, usize)> = (0..metrics.len())
        .flat_map(|i| (0..metrics.len()).map(move |j| (i, j)))
        .collect();
    let flat = exec.map(&cells, |&(i, j)| {
        let result = correlate(&names[i], &names[j], &online[j], &offline[i]);
        MatrixEntry {
            offline: names[i].clone(),
            online: names[j].clone(),
            correlation: result.as_ref().ok().map(|q| q.correlation),
            error: result.err().map(|e| e.to_string()),
        }
    });
    let mut flat = flat.into_iter();
    let entries = (0..metrics.len())
        .map(|_| flat.by_ref().take(metrics.len()).collect())
        .collect();
    Ok(QMatrix {
        metrics: names,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationBand {
    High,
    Moderate,
    Low,
}

pub const HIGH_THRESHOLD: f64 = 0.7;
pub const MODERATE_THRESHOLD: f64 = 0.3;

impl CorrelationBand {
    /// High for |q| >= 0.7 (a perfect |q| = 1 included), Moderate for 0.3 <= |q| < 0.7,
    /// Low below.
    pub fn of(q: f64) -> CorrelationBand {
        let a = q.abs();
        if a >= HIGH_THRESHOLD {
            CorrelationBand::High
        } else if a >= MODERATE_THRESHOLD {
            CorrelationBand::Moderate
        } else {
            CorrelationBand::Low
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CorrelationBand::High => "High",
            CorrelationBand::Moderate => "Moderate",
            CorrelationBand::Low => "Low",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    pub q: f64,
    pub p_value: f64,
    pub n: usize,
    pub group: CorrelationBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupThresholds {
    pub high: f64,
    pub moderate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub online_metric: String,
    pub rows: Vec<ReportRow>,
    pub thresholds: GroupThresholds,
}

impl SelectionReport {
    pub fn row(&self, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "online metric: {}", self.online_metric);
        let width = self
            .rows
            .iter()
            .map(|r| r.metric.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let _ = writeln!(
            out,
            "{:<9}  {:<width$}  {:>7}  {:>9}  {:>5}",
            "Group", "Metric", "Q", "p-value", "n"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<9}  {:<width$}  {:>7.4}  {:>9.2e}  {:>5}",
                r.group.label(),
                r.metric,
                r.q,
                r.p_value,
                r.n
            );
        }
        out
    }
}

/// Rows sorted by |Q| descending (ties by name), labelled with their band.
pub fn report(online_metric: &str, results: &[QResult]) -> SelectionReport {
    let mut rows: Vec<ReportRow> = results
        .iter()
        .map(|r| ReportRow {
            metric: r.offline.clone(),
            q: r.correlation.coefficient,
            p_value: r.correlation.p_value,
            n: r.correlation.n,
            group: CorrelationBand::of(r.correlation.coefficient),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.q.abs()
            .total_cmp(&a.q.abs())
            .then_with(|| a.metric.cmp(&b.metric))
    });
    SelectionReport {
        online_metric: online_metric.to_string(),
        rows,
        thresholds: GroupThresholds {
            high: HIGH_THRESHOLD,
            moderate: MODERATE_THRESHOLD,
        },
    }
}

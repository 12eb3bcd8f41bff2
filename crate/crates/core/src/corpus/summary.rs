use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{derive_pairs, CommitRecord, Corpus, DerivationMethod, NodeSource, PairPolicy};

/// Row of the per-source dataset summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummarySource {
    ExpertLabeling,
    SyntheticBackward,
    ForwardFromExpertLabeled,
    ForwardFromBackward,
    Full,
}

impl SummarySource {
    pub const ALL: [SummarySource; 5] = [
        SummarySource::ExpertLabeling,
        SummarySource::SyntheticBackward,
        SummarySource::ForwardFromExpertLabeled,
        SummarySource::ForwardFromBackward,
        SummarySource::Full,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SummarySource::ExpertLabeling => "Expert labeling",
            SummarySource::SyntheticBackward => "Synthetic (backward)",
            SummarySource::ForwardFromExpertLabeled => "Synthetic (forward) from expert-labeled",
            SummarySource::ForwardFromBackward => "Synthetic (forward) from backward",
            SummarySource::Full => "Full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub source: SummarySource,
    pub commits: usize,
    pub related: usize,
    pub related_per_commit: f64,
    pub independent: usize,
    pub independent_per_commit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub policy: PairPolicy,
    pub rows: Vec<SummaryRow>,
}

impl DatasetSummary {
    pub fn row(&self, source: SummarySource) -> &SummaryRow {
        self.rows
            .iter()
            .find(|r| r.source == source)
            .expect("every source has a row")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let headers = [
            "Source",
            "Related pairs",
            "Avg related/commit",
            "Independent pairs",
            "Avg independent/commit",
        ];
        let body: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.source.label().to_string(),
                    r.related.to_string(),
                    format!("{:.2}", r.related_per_commit),
                    r.independent.to_string(),
                    format!("{:.2}", r.independent_per_commit),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..5)
            .map(|i| {
                body.iter()
                    .map(|row| row[i].len())
                    .chain([headers[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut line = |cells: &[&str]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{c:<w$}", w = widths[i])
                    } else {
                        format!("{c:>w$}", w = widths[i])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&headers);
        for row in &body {
            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
            line(&cells);
        }
        out
    }
}

/// Where an edited message came from, split by the source of its parent for forward edits.
fn edit_origin(record: &CommitRecord, edited_id: &str) -> Option<EditOrigin> {
    let node = record.node(edited_id)?;
    match node.source {
        NodeSource::Expert => Some(EditOrigin::Expert),
        NodeSource::SyntheticForward => {
            let parent = record
                .parents(edited_id)
                .find(|e| e.method == DerivationMethod::LlmForward)
                .and_then(|e| record.node(&e.from_node))?;
            match parent.source {
                NodeSource::Model => Some(EditOrigin::ForwardFromModel),
                NodeSource::SyntheticBackward => Some(EditOrigin::ForwardFromBackward),
                _ => None,
            }
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EditOrigin {
    Expert,
    ForwardFromModel,
    ForwardFromBackward,
}

fn classify(generated: NodeSource, origin: Option<EditOrigin>) -> Option<SummarySource> {
    match (generated, origin?) {
        (NodeSource::Model, EditOrigin::Expert) => Some(SummarySource::ExpertLabeling),
        (NodeSource::SyntheticBackward, EditOrigin::Expert) => {
            Some(SummarySource::SyntheticBackward)
        }
        (NodeSource::Model, EditOrigin::ForwardFromModel) => {
            Some(SummarySource::ForwardFromExpertLabeled)
        }
        (NodeSource::SyntheticBackward, EditOrigin::ForwardFromBackward) => {
            Some(SummarySource::ForwardFromBackward)
        }
        _ => None,
    }
}

/// Per-source pair counts. Pairs against the original message are not counted; a
/// (generated, edited) pair lands in the row matching the generated node's source and
/// the edited node's origin, and every pair counts towards `Full`. Averages divide by the
/// number of commits with at least one related pair in that row.
pub fn dataset_summary(corpus: &Corpus, policy: PairPolicy) -> DatasetSummary {
    let n = SummarySource::ALL.len();
    let mut related = vec![0usize; n];
    let mut independent = vec![0usize; n];
    let mut commits: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); n];

    for record in corpus.records() {
        let pairs = derive_pairs(record, policy, false);
        let source_of = |id: &str| record.node(id).map(|n| n.source);
        let row_of =
            |g: &str, e: &str| source_of(g).and_then(|gs| classify(gs, edit_origin(record, e)));
        for (g, e) in &pairs.related {
            for row in [row_of(g, e), Some(SummarySource::Full)]
                .into_iter()
                .flatten()
            {
                related[row as usize] += 1;
                commits[row as usize].insert(record.commit_id.as_str());
            }
        }
        for (g, reference) in &pairs.independent {
            let Some(e) = reference.node_id() else {
                continue;
            };
            for row in [row_of(g, e), Some(SummarySource::Full)]
                .into_iter()
                .flatten()
            {
                independent[row as usize] += 1;
            }
        }
    }

    let per = |count: usize, commits: usize| {
        if commits == 0 {
            0.0
        } else {
            count as f64 / commits as f64
        }
    };
    let rows = SummarySource::ALL
        .iter()
        .map(|&source| {
            let i = source as usize;
            let c = commits[i].len();
            SummaryRow {
                source,
                commits: c,
                related: related[i],
                related_per_commit: per(related[i], c),
                independent: independent[i],
                independent_per_commit: per(independent[i], c),
            }
        })
        .collect();
    DatasetSummary { policy, rows }
}

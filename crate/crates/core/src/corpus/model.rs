use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Whether a message was produced by a generator or by editing another message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Generated,
    Edited,
}

/// Who produced a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSource {
    Model,
    Expert,
    SyntheticBackward,
    SyntheticForward,
}

impl NodeSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeSource::Model => "model",
            NodeSource::Expert => "expert",
            NodeSource::SyntheticBackward => "synthetic-backward",
            NodeSource::SyntheticForward => "synthetic-forward",
        }
    }

    /// The node kind a message of this source must have.
    pub fn kind(&self) -> NodeKind {
        match self {
            NodeSource::Model | NodeSource::SyntheticBackward => NodeKind::Generated,
            NodeSource::Expert | NodeSource::SyntheticForward => NodeKind::Edited,
        }
    }
}

impl fmt::Display for NodeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How one message was derived from another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivationMethod {
    HumanEdit,
    LlmBackward,
    LlmForward,
}

impl DerivationMethod {
    /// `(from, to)` node kinds an edge of this method connects.
    pub fn endpoint_kinds(&self) -> (NodeKind, NodeKind) {
        match self {
            DerivationMethod::HumanEdit | DerivationMethod::LlmForward => {
                (NodeKind::Generated, NodeKind::Edited)
            }
            DerivationMethod::LlmBackward => (NodeKind::Edited, NodeKind::Generated),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageNode {
    pub node_id: String,
    pub kind: NodeKind,
    pub source: NodeSource,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

impl MessageNode {
    pub fn new(node_id: impl Into<String>, source: NodeSource, text: impl Into<String>) -> Self {
        MessageNode {
            node_id: node_id.into(),
            kind: source.kind(),
            source,
            text: text.into(),
            created_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationEdge {
    #[serde(rename = "from")]
    pub from_node: String,
    #[serde(rename = "to")]
    pub to_node: String,
    pub method: DerivationMethod,
}

impl DerivationEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, method: DerivationMethod) -> Self {
        DerivationEdge {
            from_node: from.into(),
            to_node: to.into(),
            method,
        }
    }
}

/// One commit with its original message and the graph of generated and edited messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    pub diff: String,
    pub original_message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default)]
    pub nodes: Vec<MessageNode>,
    #[serde(default)]
    pub edges: Vec<DerivationEdge>,
}

impl CommitRecord {
    pub fn node(&self, node_id: &str) -> Option<&MessageNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    pub fn generated(&self) -> impl Iterator<Item = &MessageNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Generated)
    }

    pub fn edited(&self) -> impl Iterator<Item = &MessageNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Edited)
    }

    /// Incoming edges of `node_id`.
    pub fn parents<'a>(
        &'a self,
        node_id: &'a str,
    ) -> impl Iterator<Item = &'a DerivationEdge> + 'a {
        self.edges.iter().filter(move |e| e.to_node == node_id)
    }

    /// Checks every record-level invariant.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |field: &str, message: String| CorpusError::Invalid {
            commit_id: self.commit_id.clone(),
            field: field.to_string(),
            message,
        };

        if self.commit_id.is_empty() {
            return Err(invalid("commit_id", "must be non-empty".into()));
        }

        let mut by_id: HashMap<&str, &MessageNode> = HashMap::with_capacity(self.nodes.len());
        for node in &self.nodes {
            if node.node_id.is_empty() {
                return Err(invalid("nodes.node_id", "must be non-empty".into()));
            }
            if by_id.insert(node.node_id.as_str(), node).is_some() {
                return Err(invalid(
                    "nodes.node_id",
                    format!("duplicate node id {:?}", node.node_id),
                ));
            }
            if node.text.is_empty() {
                return Err(invalid(
                    "nodes.text",
                    format!("node {:?} has empty text", node.node_id),
                ));
            }
            if node.source.kind() != node.kind {
                return Err(invalid(
                    "nodes.source",
                    format!(
                        "node {:?} of kind {:?} cannot have source {}",
                        node.node_id, node.kind, node.source
                    ),
                ));
            }
        }

        for edge in &self.edges {
            let describe = || format!("{} -> {} ({:?})", edge.from_node, edge.to_node, edge.method);
            let from = by_id.get(edge.from_node.as_str()).ok_or_else(|| {
                invalid(
                    "edges.from",
                    format!(
                        "dangling edge {}: unknown node {:?}",
                        describe(),
                        edge.from_node
                    ),
                )
            })?;
            let to = by_id.get(edge.to_node.as_str()).ok_or_else(|| {
                invalid(
                    "edges.to",
                    format!(
                        "dangling edge {}: unknown node {:?}",
                        describe(),
                        edge.to_node
                    ),
                )
            })?;
            let (want_from, want_to) = edge.method.endpoint_kinds();
            if from.kind != want_from || to.kind != want_to {
                return Err(invalid(
                    "edges.method",
                    format!(
                        "edge {} must go {:?} -> {:?}",
                        describe(),
                        want_from,
                        want_to
                    ),
                ));
            }
        }

        for node in &self.nodes {
            let incoming: Vec<&DerivationEdge> = self.parents(&node.node_id).collect();
            match (node.kind, node.source) {
                (NodeKind::Edited, _) if incoming.is_empty() => {
                    return Err(invalid(
                        "edges",
                        format!(
                            "edited node {:?} has no incoming derivation edge",
                            node.node_id
                        ),
                    ));
                }
                (NodeKind::Generated, NodeSource::SyntheticBackward)
                    // Edge kinds were checked above, so a single incoming edge is llm-backward
                    // from an edited node.
                    if incoming.len() != 1 => {
                        return Err(invalid(
                            "edges",
                            format!(
                                "synthetic-backward node {:?} needs exactly one incoming edge, has {}",
                                node.node_id,
                                incoming.len()
                            ),
                        ));
                    }
                _ => {}
            }
        }

        if let Some(node) = self.find_cycle() {
            return Err(invalid(
                "edges",
                format!("derivation graph has a cycle through {node:?}"),
            ));
        }
        Ok(())
    }

    /// Kahn's algorithm; returns a node on a cycle if one exists.
    fn find_cycle(&self) -> Option<String> {
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.iter().map(|n| (n.node_id.as_str(), 0)).collect();
        for e in &self.edges {
            *indegree.entry(e.to_node.as_str()).or_default() += 1;
        }
        let mut ready: Vec<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut seen = 0;
        while let Some(id) = ready.pop() {
            seen += 1;
            for e in self.edges.iter().filter(|e| e.from_node == id) {
                let d = indegree
                    .get_mut(e.to_node.as_str())
                    .expect("validated endpoint");
                *d -= 1;
                if *d == 0 {
                    ready.push(e.to_node.as_str());
                }
            }
        }
        if seen == indegree.len() {
            None
        } else {
            indegree
                .into_iter()
                .find(|(_, d)| *d > 0)
                .map(|(id, _)| id.to_string())
        }
    }
}

/// An ordered collection of validated commit records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<CommitRecord>,
}

impl Corpus {
    /// Validates every record and rejects duplicate commit ids.
    pub fn new(records: Vec<CommitRecord>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for record in &records {
            record.validate()?;
            if !seen.insert(record.commit_id.as_str()) {
                return Err(CorpusError::DuplicateCommit {
                    commit_id: record.commit_id.clone(),
                    line: None,
                });
            }
        }
        Ok(Corpus { records })
    }

    pub fn records(&self) -> &[CommitRecord] {
        &self.records
    }

    pub fn get(&self, commit_id: &str) -> Option<&CommitRecord> {
        self.records.iter().find(|r| r.commit_id == commit_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<CommitRecord> {
        self.records
    }

    /// Keeps only the nodes whose source is in `sources`, along with the edges between
    /// them. Records left without nodes are dropped.
    pub fn restrict_sources(&self, sources: &[NodeSource]) -> Result<Corpus, CorpusError> {
        let records = self
            .records
            .iter()
            .filter_map(|r| {
                let nodes: Vec<MessageNode> = r
                    .nodes
                    .iter()
                    .filter(|n| sources.contains(&n.source))
                    .cloned()
                    .collect();
                if nodes.is_empty() {
                    return None;
                }
                let keep: BTreeSet<&str> = nodes.iter().map(|n| n.node_id.as_str()).collect();
                let edges = r
                    .edges
                    .iter()
                    .filter(|e| {
                        keep.contains(e.from_node.as_str()) && keep.contains(e.to_node.as_str())
                    })
                    .cloned()
                    .collect();
                Some(CommitRecord {
                    nodes,
                    edges,
                    ..r.clone()
                })
            })
            .collect();
        Corpus::new(records)
    }
}

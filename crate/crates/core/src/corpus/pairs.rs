use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CommitRecord;

/// Which (generated, edited) pairs count as related.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairPolicy {
    /// Joined by a single derivation edge.
    #[default]
    Direct,
    /// In the same weakly connected derivation component.
    Closure,
}

impl FromStr for PairPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(PairPolicy::Direct),
            "closure" => Ok(PairPolicy::Closure),
            other => Err(format!(
                "unknown pairing policy {other:?} (expected direct or closure)"
            )),
        }
    }
}

impl fmt::Display for PairPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairPolicy::Direct => "direct",
            PairPolicy::Closure => "closure",
        })
    }
}

/// A reference message: an edited node of the same commit or the original VCS message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Node(String),
    Original,
}

impl Reference {
    pub fn text<'a>(&self, record: &'a CommitRecord) -> Option<&'a str> {
        match self {
            Reference::Node(id) => record.node(id).map(|n| n.text.as_str()),
            Reference::Original => Some(record.original_message.as_str()),
        }
    }

    pub fn node_id(&self) -> Option<&str> {
        match self {
            Reference::Node(id) => Some(id),
            Reference::Original => None,
        }
    }
}

/// Related and conditionally independent pairs for one commit, sorted by node id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairSet {
    pub commit_id: String,
    pub related: Vec<(String, String)>,
    pub independent: Vec<(String, Reference)>,
}

impl PairSet {
    pub fn related_of<'a>(&'a self, generated: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.related
            .iter()
            .filter(move |(g, _)| g == generated)
            .map(|(_, e)| e.as_str())
    }

    pub fn independent_of<'a>(
        &'a self,
        generated: &'a str,
    ) -> impl Iterator<Item = &'a Reference> + 'a {
        self.independent
            .iter()
            .filter(move |(g, _)| g == generated)
            .map(|(_, r)| r)
    }
}

pub fn derive_pairs(record: &CommitRecord, policy: PairPolicy, include_original: bool) -> PairSet {
    let generated: BTreeSet<&str> = record.generated().map(|n| n.node_id.as_str()).collect();
    let edited: BTreeSet<&str> = record.edited().map(|n| n.node_id.as_str()).collect();

    type Relation<'a> = Box<dyn Fn(&str, &str) -> bool + 'a>;
    let is_related: Relation = match policy {
        PairPolicy::Direct => {
            let adjacent: BTreeSet<(&str, &str)> = record
                .edges
                .iter()
                .flat_map(|e| {
                    [
                        (e.from_node.as_str(), e.to_node.as_str()),
                        (e.to_node.as_str(), e.from_node.as_str()),
                    ]
                })
                .collect();
            Box::new(move |g, e| adjacent.contains(&(g, e)))
        }
        PairPolicy::Closure => {
            let component = components(record);
            Box::new(move |g, e| component.get(g) == component.get(e))
        }
    };

    let mut set = PairSet {
        commit_id: record.commit_id.clone(),
        ..PairSet::default()
    };
    for &g in &generated {
        for &e in &edited {
            if is_related(g, e) {
                set.related.push((g.to_string(), e.to_string()));
            } else {
                set.independent
                    .push((g.to_string(), Reference::Node(e.to_string())));
            }
        }
        if include_original {
            set.independent.push((g.to_string(), Reference::Original));
        }
    }
    set
}

/// Smallest node id of each node's weakly connected component.
fn components(record: &CommitRecord) -> BTreeMap<&str, &str> {
    let mut parent: BTreeMap<&str, &str> = record
        .nodes
        .iter()
        .map(|n| (n.node_id.as_str(), n.node_id.as_str()))
        .collect();

    fn root<'a>(parent: &BTreeMap<&'a str, &'a str>, mut x: &'a str) -> &'a str {
        while parent[x] != x {
            x = parent[x];
        }
        x
    }

    for e in &record.edges {
        let a = root(&parent, e.from_node.as_str());
        let b = root(&parent, e.to_node.as_str());
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent.insert(hi, lo);
        }
    }
    let ids: Vec<&str> = parent.keys().copied().collect();
    ids.into_iter().map(|id| (id, root(&parent, id))).collect()
}

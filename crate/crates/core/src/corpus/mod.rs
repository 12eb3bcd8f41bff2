//! Commit records with their generated/edited message graphs, persistence, and pair
//! derivation.

mod import;
mod io;
mod model;
mod pairs;
mod summary;

use thiserror::Error;

pub use import::import_pair_table;
pub use io::{canonical_line, load_corpus, read_corpus, save_corpus, write_corpus};
pub use model::{
    CommitRecord, Corpus, DerivationEdge, DerivationMethod, MessageNode, NodeKind, NodeSource,
};
pub use pairs::{derive_pairs, PairPolicy, PairSet, Reference};
pub use summary::{dataset_summary, DatasetSummary, SummaryRow, SummarySource};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("commit {commit_id:?}, field {field}: {message}")]
    Invalid {
        commit_id: String,
        field: String,
        message: String,
    },
    #[error("duplicate commit id {commit_id:?}{}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    DuplicateCommit {
        commit_id: String,
        line: Option<usize>,
    },
}

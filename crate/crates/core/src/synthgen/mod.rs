//! Synthetic extension of a corpus with LLM-generated messages.
//!
//! Backward generation asks the model to undo a human edit (E -> G'), forward generation to
//! imitate one (G or G' -> E'). Candidates that add (backward) or remove (forward) too much
//! content relative to their input are rejected, with a fixed budget of attempts per job.

mod client;
mod filter;
mod pipeline;
mod prompt;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;

#[cfg(feature = "http")]
pub use client::HttpChatClient;
pub use client::{
    load_transcript, read_transcript, write_transcript, LlmClient, LlmError, LlmRequest,
    MockClient, ReplayClient, TranscriptEntry, TranscriptRequest,
};
pub use filter::{added_fraction, removed_fraction};
pub use pipeline::{
    apply_results, extend, generate, generate_backward, generate_forward, icl_pool, plan_jobs,
    AttemptRecord, ExtendConfig, ExtendOutcome, GenerationJob, GenerationResult, Outcome,
    Provenance,
};
pub use prompt::{build_prompt, prompt_hash, IclExample};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{0} text must not be empty")]
    EmptyText(&'static str),
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("job {job}: {source}")]
    Upstream {
        job: String,
        #[source]
        source: LlmError,
    },
    #[error("transcript line {line}: {message}")]
    Transcript { line: usize, message: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("node {node_id:?} not found in commit {commit_id:?}")]
    UnknownNode { commit_id: String, node_id: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Backward,
    Forward,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Backward => "backward",
            Direction::Forward => "forward",
        }
    }

    fn suffix(&self) -> &'static str {
        match self {
            Direction::Backward => "bw",
            Direction::Forward => "fw",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "backward" => Ok(Direction::Backward),
            "forward" => Ok(Direction::Forward),
            other => Err(format!(
                "unknown direction {other:?}; expected backward or forward"
            )),
        }
    }
}

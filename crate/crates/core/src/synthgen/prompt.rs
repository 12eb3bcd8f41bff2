use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Direction;

/// A human edit used as an in-context example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclExample {
    pub commit_id: String,
    pub generated: String,
    pub edited: String,
}

const BACKWARD_INSTRUCTION: &str = "\
A developer received a commit message written by an automatic commit message generator \
and edited it before committing. Given the edited message, reconstruct the message the \
generator originally produced. Reply with the commit message only.";

const FORWARD_INSTRUCTION: &str = "\
A developer received a commit message written by an automatic commit message generator \
and edited it before committing. Given the generated message, write the edited message \
the developer would commit. Reply with the commit message only.";

fn labels(direction: Direction) -> (&'static str, &'static str) {
    match direction {
        Direction::Backward => ("Edited message", "Generated message"),
        Direction::Forward => ("Generated message", "Edited message"),
    }
}

/// Deterministic prompt: instruction, numbered examples, optional code changes, target.
pub fn build_prompt(
    direction: Direction,
    icl: &[IclExample],
    target: &str,
    diff: Option<&str>,
) -> String {
    let (input_label, output_label) = labels(direction);
    let mut out = String::new();
    out.push_str(match direction {
        Direction::Backward => BACKWARD_INSTRUCTION,
        Direction::Forward => FORWARD_INSTRUCTION,
    });
    out.push_str("\n\n");
    for (i, ex) in icl.iter().enumerate() {
        let (input, output) = match direction {
            Direction::Backward => (&ex.edited, &ex.generated),
            Direction::Forward => (&ex.generated, &ex.edited),
        };
        let _ = write!(
            out,
            "### Example {}\n{input_label}:\n{input}\n{output_label}:\n{output}\n\n",
            i + 1
        );
    }
    if let Some(diff) = diff.filter(|d| !d.is_empty()) {
        let _ = write!(out, "### Code changes\n{diff}\n\n");
    }
    let _ = write!(out, "### Task\n{input_label}:\n{target}\n{output_label}:\n");
    out
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

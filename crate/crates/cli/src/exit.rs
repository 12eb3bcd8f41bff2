use cmgeval_core::selection::SelectionError;
use cmgeval_core::synthgen::{LlmError, SynthError};
use cmgeval_core::textmetrics::MetricError;

pub const OK: u8 = 0;
pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const UPSTREAM: u8 = 3;

/// A bad flag combination detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Maps an error chain to an exit code. Anything not recognised counts as a data error.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<SynthError>() {
            match e {
                SynthError::Config(_) => return USAGE,
                SynthError::Upstream { .. } => {}
                _ => return DATA,
            }
        }
        if let Some(e) = cause.downcast_ref::<LlmError>() {
            return match e {
                LlmError::ReplayMiss { .. } | LlmError::ReplayMismatch { .. } => DATA,
                _ => UPSTREAM,
            };
        }
        if cause.is::<MetricError>() {
            return UPSTREAM;
        }
        if let Some(SelectionError::Stats { .. }) = cause.downcast_ref::<SelectionError>() {
            return DATA;
        }
    }
    DATA
}

/// The error chain on one line, skipping causes already spelled out by their parent.
pub fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

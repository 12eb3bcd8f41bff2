use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One editor change. Offsets count characters, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditEvent {
    pub event_index: u64,
    /// Client wall clock, milliseconds.
    pub timestamp: u64,
    pub position: usize,
    pub deleted_len: usize,
    #[serde(default)]
    pub inserted_text: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("event {index}: deleting {deleted_len} at {position} is out of range for a text of {len} characters")]
pub struct OutOfRange {
    pub index: u64,
    pub position: usize,
    pub deleted_len: usize,
    pub len: usize,
}

pub fn apply_event(text: &str, event: &EditEvent) -> Result<String, OutOfRange> {
    let chars: Vec<char> = text.chars().collect();
    let end = event.position.checked_add(event.deleted_len);
    match end {
        Some(end) if end <= chars.len() => {
            let mut out: String = chars[..event.position].iter().collect();
            out.push_str(&event.inserted_text);
            out.extend(&chars[end..]);
            Ok(out)
        }
        _ => Err(OutOfRange {
            index: event.event_index,
            position: event.position,
            deleted_len: event.deleted_len,
            len: chars.len(),
        }),
    }
}

/// Folds `events` over `start` in order.
pub fn replay(start: &str, events: &[EditEvent]) -> Result<String, OutOfRange> {
    events
        .iter()
        .try_fold(start.to_string(), |text, e| apply_event(&text, e))
}

/// Character index of the first difference, or `None` when equal.
pub fn first_divergence(a: &str, b: &str) -> Option<usize> {
    let mut ai = a.chars();
    let mut bi = b.chars();
    let mut i = 0;
    loop {
        match (ai.next(), bi.next()) {
            (None, None) => return None,
            (x, y) if x != y => return Some(i),
            _ => i += 1,
        }
    }
}

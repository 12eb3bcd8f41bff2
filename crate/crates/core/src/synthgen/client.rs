use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Direction, SynthError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    /// Identifies the generation job, e.g. `c1/e1~bw1`.
    pub job: String,
    pub attempt: u32,
    pub direction: Direction,
    pub prompt: String,
    pub prompt_hash: String,
    /// The message being transformed; also embedded in `prompt`.
    pub target: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned an error: {0}")]
    Api(String),
    #[error("transcript has no entry for job {job} attempt {attempt}")]
    ReplayMiss { job: String, attempt: u32 },
    #[error("transcript entry for job {job} attempt {attempt} was recorded for prompt {recorded}, not {expected}")]
    ReplayMismatch {
        job: String,
        attempt: u32,
        recorded: String,
        expected: String,
    },
    #[error("client configuration: {0}")]
    Config(String),
}

impl LlmError {
    /// Whether another attempt may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::Api(_))
    }
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError>;
}

type MockFn = dyn Fn(&LlmRequest) -> Result<String, LlmError> + Send + Sync;

/// Deterministic client driven by a closure; counts calls.
pub struct MockClient {
    respond: Box<MockFn>,
    calls: AtomicUsize,
}

impl MockClient {
    pub fn new(
        respond: impl Fn(&LlmRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    ) -> Self {
        MockClient {
            respond: Box::new(respond),
            calls: AtomicUsize::new(0),
        }
    }

    /// Returns the target message unchanged.
    pub fn echo() -> Self {
        MockClient::new(|r| Ok(r.target.clone()))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmClient for MockClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.respond)(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRequest {
    pub prompt: String,
}

/// One recorded LLM exchange. Exactly one of `response` and `error` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub job: String,
    pub attempt: u32,
    pub prompt_hash: String,
    pub request: TranscriptRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn read_transcript(reader: impl BufRead) -> Result<Vec<TranscriptEntry>, SynthError> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SynthError::Transcript {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry =
            serde_json::from_str(&line).map_err(|e| SynthError::Transcript {
                line: i + 1,
                message: e.to_string(),
            })?;
        if entry.response.is_some() == entry.error.is_some() {
            return Err(SynthError::Transcript {
                line: i + 1,
                message: "entry needs exactly one of response and error".into(),
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn load_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptEntry>, SynthError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_transcript(std::io::BufReader::new(file))
}

pub fn write_transcript(
    entries: &[TranscriptEntry],
    mut writer: impl Write,
) -> std::io::Result<()> {
    for e in entries {
        let line = serde_json::to_string(e).map_err(std::io::Error::other)?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Answers from a recorded transcript, keyed by job and attempt.
#[derive(Debug)]
pub struct ReplayClient {
    entries: HashMap<(String, u32), TranscriptEntry>,
}

impl ReplayClient {
    pub fn new(entries: Vec<TranscriptEntry>) -> Result<Self, SynthError> {
        let mut map = HashMap::new();
        for e in entries {
            let key = (e.job.clone(), e.attempt);
            if map.insert(key, e.clone()).is_some() {
                return Err(SynthError::Config(format!(
                    "transcript lists job {} attempt {} twice",
                    e.job, e.attempt
                )));
            }
        }
        Ok(ReplayClient { entries: map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        ReplayClient::new(load_transcript(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let entry = self
            .entries
            .get(&(request.job.clone(), request.attempt))
            .ok_or_else(|| LlmError::ReplayMiss {
                job: request.job.clone(),
                attempt: request.attempt,
            })?;
        if entry.prompt_hash != request.prompt_hash {
            return Err(LlmError::ReplayMismatch {
                job: request.job.clone(),
                attempt: request.attempt,
                recorded: entry.prompt_hash.clone(),
                expected: request.prompt_hash.clone(),
            });
        }
        match (&entry.response, &entry.error) {
            (Some(r), _) => Ok(r.clone()),
            (None, Some(e)) => Err(LlmError::Transport(e.clone())),
            (None, None) => unreachable!("validated on load"),
        }
    }
}

/// Client for an OpenAI-style chat-completion endpoint.
#[cfg(feature = "http")]
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[cfg(feature = "http")]
impl HttpChatClient {
    pub const DEFAULT_KEY_VAR: &'static str = "CMG_LLM_API_KEY";

    /// Reads the API key from the environment variable `key_var`.
    pub fn from_env(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        temperature: f64,
        key_var: &str,
    ) -> Result<Self, LlmError> {
        let api_key = std::env::var(key_var)
            .map_err(|_| LlmError::Config(format!("environment variable {key_var} is not set")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpChatClient {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature,
            api_key,
            client,
        })
    }
}

#[cfg(feature = "http")]
impl LlmClient for HttpChatClient {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        let value: serde_json::Value = response
            .json()
            .map_err(|e| LlmError::Transport(format!("unreadable response ({status}): {e}")))?;
        if !status.is_success() {
            return Err(LlmError::Api(format!("{status}: {value}")));
        }
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Api(format!("no message content in response: {value}")))
    }
}

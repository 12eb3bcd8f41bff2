//! Session state with an append-only JSONL log per session, replayed on open.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use cmgeval_core::corpus::{
    write_corpus, CommitRecord, Corpus, CorpusError, DerivationEdge, DerivationMethod, MessageNode,
    NodeSource,
};
use cmgeval_core::textmetrics::edit_distance;

use crate::events::{apply_event, first_divergence, EditEvent};

/// Insertions at least this long that occur verbatim in the commit summary are flagged.
pub const PASTE_MIN_CHARS: usize = 20;

pub const HELP_TEXT: &str = "\
Edit the generated commit message until you would be willing to publish it to the VCS. \
Write the changes yourself: do not copy and paste from the commit summary. \
If the message is already good, submit it unchanged.";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("the corpus has no generated messages to label")]
    EmptyCorpus,
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session is complete")]
    Done,
    #[error("current task is message {expected:?}, not {got:?}")]
    WrongTask { expected: String, got: String },
    #[error("event {first_bad_index} rejected: {message}")]
    EventRejected {
        first_bad_index: u64,
        message: String,
    },
    #[error("final text diverges from the replayed event log at character {position}")]
    ReplayMismatch { position: usize },
    #[error("final text must not be empty")]
    EmptyText,
    #[error("session log {path}: {message}")]
    CorruptLog { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRef {
    pub commit_id: String,
    pub message_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub annotator_id: String,
    pub seed: u64,
    pub tasks: Vec<TaskRef>,
    pub started_at: u64,
}

impl TaskRef {
    fn key(&self) -> (String, String) {
        (self.commit_id.clone(), self.message_id.clone())
    }
}

impl SessionInfo {
    pub fn task_order(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.commit_id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionFlags {
    pub zero_edit: bool,
    pub suspicious_paste: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub session_id: String,
    pub commit_id: String,
    pub message_id: String,
    pub node_id: String,
    pub text: String,
    pub edit_distance: usize,
    pub flags: SubmissionFlags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum LogEntry {
    Created(SessionInfo),
    Events {
        commit_id: String,
        message_id: String,
        events: Vec<EditEvent>,
    },
    Submitted(Submission),
    Skipped {
        commit_id: String,
        message_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum TaskView {
    Pending {
        index: usize,
        total: usize,
        commit_id: String,
        message_id: String,
        diff: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        summary: Option<String>,
        generated_message: String,
        /// Text after the events accepted so far.
        current_text: String,
        next_event_index: u64,
        help: String,
    },
    Done {
        total: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted_through: Option<u64>,
    pub next_index: u64,
}

#[derive(Debug, Clone, Default)]
struct MessageLog {
    events: Vec<EditEvent>,
    text: String,
}

#[derive(Debug)]
struct Session {
    info: SessionInfo,
    cursor: usize,
    logs: HashMap<(String, String), MessageLog>,
    submissions: Vec<Submission>,
    skipped: Vec<TaskRef>,
    file: File,
    path: PathBuf,
}

impl Session {
    fn append(&mut self, entry: &LogEntry) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(entry).expect("log entries serialize");
        line.push('\n');
        let io = |source| StoreError::Io {
            path: self.path.display().to_string(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }

    fn current(&self) -> Result<&TaskRef, StoreError> {
        self.info.tasks.get(self.cursor).ok_or(StoreError::Done)
    }

    fn check_task(&self, message_id: &str) -> Result<TaskRef, StoreError> {
        let task = self.current()?;
        if task.message_id != message_id {
            return Err(StoreError::WrongTask {
                expected: task.message_id.clone(),
                got: message_id.to_string(),
            });
        }
        Ok(task.clone())
    }

    /// Applies a log entry to the in-memory state. Entries were validated before writing.
    fn apply(&mut self, entry: LogEntry, corpus: &Corpus) -> Result<(), String> {
        match entry {
            LogEntry::Created(_) => return Err("duplicate created entry".into()),
            LogEntry::Events {
                commit_id,
                message_id,
                events,
            } => {
                let start = corpus
                    .get(&commit_id)
                    .and_then(|r| r.node(&message_id))
                    .map(|n| n.text.clone())
                    .ok_or_else(|| {
                        format!("events for unknown message {commit_id}/{message_id}")
                    })?;
                let log = self
                    .logs
                    .entry((commit_id, message_id))
                    .or_insert_with(|| MessageLog {
                        events: Vec::new(),
                        text: start,
                    });
                for e in events {
                    if e.event_index != log.events.len() as u64 {
                        return Err(format!("event index {} out of sequence", e.event_index));
                    }
                    log.text = apply_event(&log.text, &e).map_err(|e| e.to_string())?;
                    log.events.push(e);
                }
            }
            LogEntry::Submitted(s) => {
                self.submissions.push(s);
                self.cursor += 1;
            }
            LogEntry::Skipped {
                commit_id,
                message_id,
            } => {
                self.skipped.push(TaskRef {
                    commit_id,
                    message_id,
                });
                self.cursor += 1;
            }
        }
        if self.cursor > self.info.tasks.len() {
            return Err("more completed tasks than assigned".into());
        }
        Ok(())
    }
}

/// Every model-generated message of the corpus, in corpus order.
fn all_tasks(corpus: &Corpus) -> Vec<TaskRef> {
    corpus
        .records()
        .iter()
        .flat_map(|r| {
            r.nodes
                .iter()
                .filter(|n| n.source == NodeSource::Model)
                .map(|n| TaskRef {
                    commit_id: r.commit_id.clone(),
                    message_id: n.node_id.clone(),
                })
        })
        .collect()
}

/// The labeling corpus plus all sessions, each behind its own lock.
pub struct Store {
    corpus: Arc<Corpus>,
    tasks: Vec<TaskRef>,
    dir: PathBuf,
    seed: u64,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    next_session: Mutex<u64>,
}

impl Store {
    /// Opens (or creates) `dir` and replays every session log found there.
    pub fn open(corpus: Corpus, dir: impl AsRef<Path>, seed: u64) -> Result<Self, StoreError> {
        let tasks = all_tasks(&corpus);
        if tasks.is_empty() {
            return Err(StoreError::EmptyCorpus);
        }
        let dir = dir.as_ref().to_path_buf();
        let io = |source| StoreError::Io {
            path: dir.display().to_string(),
            source,
        };
        std::fs::create_dir_all(&dir).map_err(io)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = BTreeMap::new();
        let mut max_number = 0;
        for path in paths {
            let session = load_session(&path, &corpus)?;
            if let Some(n) = session_number(&session.info.session_id) {
                max_number = max_number.max(n);
            }
            sessions.insert(
                session.info.session_id.clone(),
                Arc::new(Mutex::new(session)),
            );
        }
        log::info!(
            "restored {} session(s) from {}",
            sessions.len(),
            dir.display()
        );
        Ok(Store {
            corpus: Arc::new(corpus),
            tasks,
            dir,
            seed,
            sessions: RwLock::new(sessions),
            next_session: Mutex::new(max_number + 1),
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, StoreError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    /// New session over every generated message, shuffled with `seed` (or a seed derived
    /// from the store seed and the session number).
    pub fn create_session(
        &self,
        annotator_id: &str,
        seed: Option<u64>,
    ) -> Result<SessionInfo, StoreError> {
        let mut next = self.next_session.lock().expect("session counter lock");
        let number = *next;
        let session_id = format!("s-{number:06}");
        let seed = seed.unwrap_or_else(|| self.seed.wrapping_add(number));
        let mut tasks = self.tasks.clone();
        tasks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let info = SessionInfo {
            session_id: session_id.clone(),
            annotator_id: annotator_id.to_string(),
            seed,
            tasks,
            started_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        };
        let path = self.dir.join(format!("{session_id}.jsonl"));
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|source| StoreError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let mut session = Session {
            info: info.clone(),
            cursor: 0,
            logs: HashMap::new(),
            submissions: Vec::new(),
            skipped: Vec::new(),
            file,
            path,
        };
        session.append(&LogEntry::Created(info.clone()))?;
        self.sessions
            .write()
            .expect("session map lock")
            .insert(session_id, Arc::new(Mutex::new(session)));
        *next += 1;
        Ok(info)
    }

    pub fn next_task(&self, session_id: &str) -> Result<TaskView, StoreError> {
        let session = self.session(session_id)?;
        let session = session.lock().expect("session lock");
        let total = session.info.tasks.len();
        let Ok(task) = session.current() else {
            return Ok(TaskView::Done { total });
        };
        let record = self.record(&task.commit_id)?;
        let generated = record
            .node(&task.message_id)
            .expect("tasks come from the corpus")
            .text
            .clone();
        let log = session.logs.get(&task.key());
        Ok(TaskView::Pending {
            index: session.cursor,
            total,
            commit_id: task.commit_id.clone(),
            message_id: task.message_id.clone(),
            diff: record.diff.clone(),
            summary: record.summary.clone(),
            current_text: log
                .map(|l| l.text.clone())
                .unwrap_or_else(|| generated.clone()),
            generated_message: generated,
            next_event_index: log.map(|l| l.events.len() as u64).unwrap_or(0),
            help: HELP_TEXT.to_string(),
        })
    }

    fn record(&self, commit_id: &str) -> Result<&CommitRecord, StoreError> {
        self.corpus
            .get(commit_id)
            .ok_or_else(|| StoreError::CorruptLog {
                path: self.dir.display().to_string(),
                message: format!("commit {commit_id} missing from corpus"),
            })
    }

    /// Appends a batch of events for the current task. Already accepted indices may be
    /// resent unchanged; the first new event must continue the stored sequence. The whole
    /// batch is validated before anything is written.
    pub fn record_events(
        &self,
        session_id: &str,
        message_id: &str,
        batch: Vec<EditEvent>,
    ) -> Result<Ack, StoreError> {
        let session = self.session(session_id)?;
        let mut session = session.lock().expect("session lock");
        let task = session.check_task(message_id)?;
        let start = || -> Result<MessageLog, StoreError> {
            let record = self.record(&task.commit_id)?;
            Ok(MessageLog {
                events: Vec::new(),
                text: record.node(message_id).expect("task node").text.clone(),
            })
        };
        let log = match session.logs.get(&task.key()) {
            Some(l) => l.clone(),
            None => start()?,
        };
        let stored = log.events.len() as u64;
        let mut text = log.text.clone();
        let mut fresh = Vec::new();
        let mut last: Option<u64> = None;
        for e in batch {
            let reject = |message: String| StoreError::EventRejected {
                first_bad_index: e.event_index,
                message,
            };
            if last.is_some_and(|l| e.event_index <= l) {
                return Err(reject("indices must be strictly increasing".into()));
            }
            last = Some(e.event_index);
            if e.event_index < stored {
                if log.events[e.event_index as usize] != e {
                    return Err(reject(
                        "differs from the event already accepted at this index".into(),
                    ));
                }
                continue;
            }
            let expected = stored + fresh.len() as u64;
            if e.event_index != expected {
                return Err(reject(format!("gap: expected index {expected}")));
            }
            text = apply_event(&text, &e).map_err(|err| reject(err.to_string()))?;
            fresh.push(e);
        }
        if !fresh.is_empty() {
            session.append(&LogEntry::Events {
                commit_id: task.commit_id.clone(),
                message_id: message_id.to_string(),
                events: fresh.clone(),
            })?;
            let entry = session.logs.entry(task.key()).or_insert(log);
            entry.events.extend(fresh);
            entry.text = text;
        }
        let next_index = session
            .logs
            .get(&task.key())
            .map(|l| l.events.len() as u64)
            .unwrap_or(0);
        Ok(Ack {
            accepted_through: next_index.checked_sub(1),
            next_index,
        })
    }

    /// Stores the edit if `final_text` equals the replayed event log, then advances.
    pub fn submit(
        &self,
        session_id: &str,
        message_id: &str,
        final_text: &str,
    ) -> Result<Submission, StoreError> {
        let session = self.session(session_id)?;
        let mut session = session.lock().expect("session lock");
        let task = session.check_task(message_id)?;
        let record = self.record(&task.commit_id)?;
        let generated = &record.node(message_id).expect("task node").text;
        let (replayed, events) = match session.logs.get(&task.key()) {
            Some(l) => (l.text.as_str(), l.events.as_slice()),
            None => (generated.as_str(), &[][..]),
        };
        if let Some(position) = first_divergence(replayed, final_text) {
            return Err(StoreError::ReplayMismatch { position });
        }
        if final_text.trim().is_empty() {
            return Err(StoreError::EmptyText);
        }
        let suspicious_paste = record.summary.as_deref().is_some_and(|summary| {
            events.iter().any(|e| {
                let pasted = e.inserted_text.trim();
                pasted.chars().count() >= PASTE_MIN_CHARS && summary.contains(pasted)
            })
        });
        let submission = Submission {
            session_id: session_id.to_string(),
            commit_id: task.commit_id.clone(),
            message_id: message_id.to_string(),
            node_id: format!("{message_id}~{session_id}"),
            text: final_text.to_string(),
            edit_distance: edit_distance(generated, final_text),
            flags: SubmissionFlags {
                zero_edit: final_text == generated,
                suspicious_paste,
            },
        };
        session.append(&LogEntry::Submitted(submission.clone()))?;
        session.submissions.push(submission.clone());
        session.cursor += 1;
        Ok(submission)
    }

    /// Records a skip marker for the current task and advances.
    pub fn skip(&self, session_id: &str, message_id: &str) -> Result<TaskRef, StoreError> {
        let session = self.session(session_id)?;
        let mut session = session.lock().expect("session lock");
        let task = session.check_task(message_id)?;
        session.append(&LogEntry::Skipped {
            commit_id: task.commit_id.clone(),
            message_id: task.message_id.clone(),
        })?;
        session.skipped.push(task.clone());
        session.cursor += 1;
        Ok(task)
    }

    /// All submissions as a corpus (generated message, expert edits, human-edit edges) plus
    /// the full event logs, ordered by commit and session.
    pub fn export(&self) -> Result<Export, StoreError> {
        let sessions: Vec<Arc<Mutex<Session>>> = self
            .sessions
            .read()
            .expect("session map lock")
            .values()
            .cloned()
            .collect();
        let mut submissions = Vec::new();
        let mut logs = Vec::new();
        let mut skips = Vec::new();
        for s in &sessions {
            let s = s.lock().expect("session lock");
            submissions.extend(s.submissions.iter().cloned());
            for task in &s.info.tasks {
                let Some(log) = s.logs.get(&task.key()) else {
                    continue;
                };
                logs.push(EventLogExport {
                    session_id: s.info.session_id.clone(),
                    annotator_id: s.info.annotator_id.clone(),
                    commit_id: task.commit_id.clone(),
                    message_id: task.message_id.clone(),
                    node_id: s
                        .submissions
                        .iter()
                        .find(|x| x.commit_id == task.commit_id && x.message_id == task.message_id)
                        .map(|x| x.node_id.clone()),
                    events: log.events.clone(),
                });
            }
            for t in &s.skipped {
                skips.push(SkipExport {
                    session_id: s.info.session_id.clone(),
                    commit_id: t.commit_id.clone(),
                    message_id: t.message_id.clone(),
                });
            }
        }
        let mut records = Vec::new();
        for record in self.corpus.records() {
            let mine: Vec<&Submission> = submissions
                .iter()
                .filter(|s| s.commit_id == record.commit_id)
                .collect();
            if mine.is_empty() {
                continue;
            }
            let mut nodes: Vec<MessageNode> = record
                .nodes
                .iter()
                .filter(|n| mine.iter().any(|s| s.message_id == n.node_id))
                .cloned()
                .collect();
            let mut edges = Vec::new();
            for s in &mine {
                nodes.push(MessageNode::new(
                    &s.node_id,
                    NodeSource::Expert,
                    s.text.clone(),
                ));
                edges.push(DerivationEdge::new(
                    &s.message_id,
                    &s.node_id,
                    DerivationMethod::HumanEdit,
                ));
            }
            records.push(CommitRecord {
                commit_id: record.commit_id.clone(),
                diff: record.diff.clone(),
                original_message: record.original_message.clone(),
                summary: record.summary.clone(),
                nodes,
                edges,
            });
        }
        let order = |c: &str| self.corpus.records().iter().position(|r| r.commit_id == c);
        logs.sort_by(|a, b| {
            (order(&a.commit_id), &a.session_id).cmp(&(order(&b.commit_id), &b.session_id))
        });
        Ok(Export {
            corpus: Corpus::new(records)?,
            events: logs,
            skips,
        })
    }
}

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix("s-")?.parse().ok()
}

fn load_session(path: &Path, corpus: &Corpus) -> Result<Session, StoreError> {
    let corrupt = |message: String| StoreError::CorruptLog {
        path: path.display().to_string(),
        message,
    };
    let io = |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    };
    let content = std::fs::read_to_string(path).map_err(io)?;
    // A crash mid-append can leave a partial last line; drop it so later appends start clean.
    let complete_len = content.rfind('\n').map(|i| i + 1).unwrap_or(0);
    if complete_len < content.len() {
        log::warn!("{}: dropping incomplete trailing entry", path.display());
        let f = OpenOptions::new().write(true).open(path).map_err(io)?;
        f.set_len(complete_len as u64).map_err(io)?;
    }
    let mut lines = content[..complete_len]
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let parse = |(i, line): (usize, &str)| {
        serde_json::from_str::<LogEntry>(line).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))
    };
    let info = match lines.next().map(parse).transpose()? {
        Some(LogEntry::Created(info)) => info,
        _ => return Err(corrupt("log does not start with a created entry".into())),
    };
    for t in &info.tasks {
        if corpus
            .get(&t.commit_id)
            .and_then(|r| r.node(&t.message_id))
            .is_none()
        {
            return Err(corrupt(format!(
                "task {}/{} is not in the corpus",
                t.commit_id, t.message_id
            )));
        }
    }
    let file = OpenOptions::new().append(true).open(path).map_err(io)?;
    let mut session = Session {
        info,
        cursor: 0,
        logs: HashMap::new(),
        submissions: Vec::new(),
        skipped: Vec::new(),
        file,
        path: path.to_path_buf(),
    };
    for (i, line) in lines {
        let entry = parse((i, line))?;
        session
            .apply(entry, corpus)
            .map_err(|m| corrupt(format!("line {}: {m}", i + 1)))?;
    }
    Ok(session)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLogExport {
    pub session_id: String,
    pub annotator_id: String,
    pub commit_id: String,
    pub message_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_id: Option<String>,
    pub events: Vec<EditEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipExport {
    pub session_id: String,
    pub commit_id: String,
    pub message_id: String,
}

#[derive(Debug, Clone)]
pub struct Export {
    pub corpus: Corpus,
    pub events: Vec<EventLogExport>,
    pub skips: Vec<SkipExport>,
}

impl Export {
    pub fn corpus_jsonl(&self) -> String {
        let mut buf = Vec::new();
        write_corpus(&self.corpus, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("corpus serializes to UTF-8")
    }

    pub fn events_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("event logs serialize") + "\n")
            .collect()
    }
}

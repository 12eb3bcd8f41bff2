use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{CommitRecord, Corpus, CorpusError};

/// Reads a corpus from JSONL, one commit per line. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(BufReader::new(file))
}

pub fn read_corpus(reader: impl BufRead) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: format!("line {line_no}"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CommitRecord =
            serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
                line: line_no,
                source,
            })?;
        record.validate()?;
        if !seen.insert(record.commit_id.clone()) {
            return Err(CorpusError::DuplicateCommit {
                commit_id: record.commit_id,
                line: Some(line_no),
            });
        }
        records.push(record);
    }
    Corpus::new(records)
}

/// One record as canonical JSON: sorted keys, no insignificant whitespace.
pub fn canonical_line(record: &CommitRecord) -> String {
    // serde_json::Value keeps object keys in a BTreeMap, so this sorts them.
    let value = serde_json::to_value(record).expect("commit records always serialize");
    serde_json::to_string(&value).expect("json values always serialize")
}

pub fn write_corpus(corpus: &Corpus, mut writer: impl Write) -> std::io::Result<()> {
    for record in corpus.records() {
        writer.write_all(canonical_line(record).as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_corpus(corpus, BufWriter::new(file)).map_err(io_err)
}

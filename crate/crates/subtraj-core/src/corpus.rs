//! Dataset records and streaming JSONL corpus I/O.
//!
//! A corpus is a UTF-8 JSONL file, one record per line. Every pipeline stage
//! reads a corpus, appends its own attachment under `annotations`, and writes
//! a new corpus, so each stage output is itself a valid stage input.
//!
//! The reader is streaming: it holds one line in memory at a time (plus the
//! set of ids seen so far, for duplicate detection) and yields per-line
//! `Result`s so callers can surface errors without losing the stream.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Pipeline stages, in pipeline order. Used as annotation keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Filtered,
    Decontaminated,
    Segmented,
    Judged,
    Revised,
    Scored,
    Sampled,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Filtered,
        Stage::Decontaminated,
        Stage::Segmented,
        Stage::Judged,
        Stage::Revised,
        Stage::Scored,
        Stage::Sampled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Filtered => "filtered",
            Stage::Decontaminated => "decontaminated",
            Stage::Segmented => "segmented",
            Stage::Judged => "judged",
            Stage::Revised => "revised",
            Stage::Scored => "scored",
            Stage::Sampled => "sampled",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One stage's output, attached inline to a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAttachment {
    pub payload: Value,
    pub produced_at: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl StageAttachment {
    /// New attachment stamped with the current tool version and timestamp.
    pub fn new(payload: Value) -> Self {
        StageAttachment {
            payload,
            produced_at: stage_timestamp(),
            tool_version: crate::TOOL_VERSION.to_string(),
            config_hash: None,
        }
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = Some(hash.into());
        self
    }
}

/// One QA pair: a question and a raw answer holding a delimited thinking
/// block followed by the final answer text.
///
/// Unknown top-level fields round-trip verbatim through `extra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<Stage, StageAttachment>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, Value>,
}

impl DatasetRecord {
    pub fn new(id: impl Into<String>, question: impl Into<String>, answer: impl Into<String>) -> Self {
        DatasetRecord {
            id: id.into(),
            question: question.into(),
            answer: answer.into(),
            source: String::new(),
            ground_truth: None,
            annotations: BTreeMap::new(),
            extra: serde_json::Map::new(),
        }
    }

    /// Check the record invariants: nonempty id, question and answer.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty \"id\"".into());
        }
        if self.question.is_empty() {
            return Err("empty \"question\"".into());
        }
        if self.answer.is_empty() {
            return Err("empty \"answer\"".into());
        }
        Ok(())
    }

    pub fn attachment(&self, stage: Stage) -> Option<&StageAttachment> {
        self.annotations.get(&stage)
    }

    pub fn has_stage(&self, stage: Stage) -> bool {
        self.annotations.contains_key(&stage)
    }

    /// Attach (or replace) one stage's output. A record carries at most one
    /// attachment per stage.
    pub fn attach(&mut self, stage: Stage, attachment: StageAttachment) {
        self.annotations.insert(stage, attachment);
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed JSON: {source}")]
    Malformed {
        line: u64,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: invalid record: {reason}")]
    Invalid { line: u64, reason: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: u64, id: String },
    #[error("record {id:?}: cannot serialize: {source}")]
    Serialize {
        id: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    /// Line number the error refers to, when it refers to one.
    pub fn line(&self) -> Option<u64> {
        match self {
            CorpusError::Malformed { line, .. }
            | CorpusError::Invalid { line, .. }
            | CorpusError::DuplicateId { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// How the reader reacts to bad lines.
///
/// Strict aborts the stream on the first error; lenient yields the error and
/// keeps going, so valid records after a malformed line are still produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

/// Streaming JSONL reader yielding one `Result<DatasetRecord>` per line.
pub struct RecordReader<R: BufRead> {
    inner: R,
    mode: ParseMode,
    line_no: u64,
    buf: String,
    seen_ids: HashSet<String>,
    done: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(inner: R, mode: ParseMode) -> Self {
        RecordReader {
            inner,
            mode,
            line_no: 0,
            buf: String::new(),
            seen_ids: HashSet::new(),
            done: false,
        }
    }

    /// Lines consumed from the underlying source so far.
    pub fn lines_read(&self) -> u64 {
        self.line_no
    }

    fn parse_line(&mut self) -> Result<DatasetRecord, CorpusError> {
        let line = self.line_no;
        let text = self.buf.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            return Err(CorpusError::Invalid {
                line,
                reason: "empty line".into(),
            });
        }
        let record: DatasetRecord = serde_json::from_str(text).map_err(|e| {
            if e.is_data() {
                // Shape errors (missing/mistyped fields) as opposed to JSON syntax.
                CorpusError::Invalid {
                    line,
                    reason: e.to_string(),
                }
            } else {
                CorpusError::Malformed { line, source: e }
            }
        })?;
        record
            .validate()
            .map_err(|reason| CorpusError::Invalid { line, reason })?;
        if !self.seen_ids.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: record.id,
            });
        }
        Ok(record)
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<DatasetRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        self.buf.clear();
        match self.inner.read_line(&mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line_no += 1;
                let item = self.parse_line();
                if item.is_err() && self.mode == ParseMode::Strict {
                    self.done = true;
                }
                Some(item)
            }
            Err(e) => {
                self.done = true;
                Some(Err(CorpusError::Io(e)))
            }
        }
    }
}

/// Stream records from a JSONL byte source.
pub fn read_records<R: BufRead>(reader: R, mode: ParseMode) -> RecordReader<R> {
    RecordReader::new(reader, mode)
}

/// Write records as JSONL, one object per line. Returns bytes written.
pub fn write_records<'a, W, I>(mut writer: W, records: I) -> Result<u64, CorpusError>
where
    W: Write,
    I: IntoIterator<Item = &'a DatasetRecord>,
{
    let mut written = 0u64;
    for record in records {
        written += write_record(&mut writer, record)?;
    }
    writer.flush()?;
    Ok(written)
}

/// Write a single record plus trailing newline. Returns bytes written.
pub fn write_record<W: Write>(writer: &mut W, record: &DatasetRecord) -> Result<u64, CorpusError> {
    let bytes = serde_json::to_vec(record).map_err(|source| CorpusError::Serialize {
        id: record.id.clone(),
        source,
    })?;
    writer.write_all(&bytes)?;
    writer.write_all(b"\n")?;
    Ok(bytes.len() as u64 + 1)
}

/// UTC timestamp for stage attachments, second precision.
///
/// Honors `SOURCE_DATE_EPOCH` so that pipeline outputs can be made
/// byte-reproducible across runs.
pub fn stage_timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse::<i64>().ok())
        .unwrap_or_else(|| chrono::Utc::now().timestamp());
    match chrono::DateTime::from_timestamp(secs, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => "1970-01-01T00:00:00Z".to_string(),
    }
}

//! Shared stage plumbing: streaming corpus driver, stage attachments,
//! rejection logs, dependency gating, and the payload schemas each stage
//! writes under `annotations`.

pub mod decontaminate;
pub mod filter;
pub mod judge;
pub mod pipeline;
pub mod report;
pub mod revise;
pub mod sample;
pub mod score;
pub mod segment;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use subtraj_core::corpus::{
    read_records, write_record, CorpusError, DatasetRecord, Stage, StageAttachment,
};
use subtraj_core::filters::RejectReason;
use subtraj_core::judge::PromptTemplates;
use subtraj_core::reviser::Classification;
use subtraj_core::scorer::{RuleTokenizer, ScoredThinking, Tokenizer, VocabTokenizer};
use subtraj_core::segmenter::{
    extract_thinking, subtrajectories_from_spans, Subtrajectory, ThinkingProcess,
};

use crate::config::{PipelineConfig, TokenizerKind};
use crate::CliError;

/// Resolved configuration plus run-wide switches.
pub struct StageContext {
    pub config: PipelineConfig,
    pub config_hash: String,
    pub force: bool,
}

impl StageContext {
    pub fn new(config: PipelineConfig, force: bool) -> Result<Self, CliError> {
        config.validate()?;
        let config_hash = config.hash();
        Ok(StageContext {
            config,
            config_hash,
            force,
        })
    }

    /// Stage attachment stamped with timestamp, tool version, config hash.
    pub fn attachment(&self, payload: serde_json::Value) -> StageAttachment {
        StageAttachment::new(payload).with_config_hash(self.config_hash.clone())
    }
}

/// One stage's bookkeeping, printed as a single summary line.
#[derive(Debug, Default)]
pub struct StageSummary {
    pub stage: &'static str,
    pub records_in: u64,
    pub records_out: u64,
    pub rejected: u64,
    pub parse_errors: u64,
    pub notes: Vec<(String, String)>,
}

impl StageSummary {
    pub fn new(stage: &'static str) -> Self {
        StageSummary {
            stage,
            ..StageSummary::default()
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn print(&self) {
        let mut line = format!(
            "{}: in={} out={} rejected={}",
            self.stage, self.records_in, self.records_out, self.rejected
        );
        if self.parse_errors > 0 {
            line.push_str(&format!(" parse_errors={}", self.parse_errors));
        }
        for (k, v) in &self.notes {
            line.push_str(&format!(" {k}={v}"));
        }
        println!("{line}");
    }
}

/// JSONL log of rejected records: `{id, stage, reasons, evidence}` per line.
pub struct RejectionLog {
    writer: BufWriter<File>,
    path: PathBuf,
    pub count: u64,
}

impl RejectionLog {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let file = File::create(path)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))?;
        Ok(RejectionLog {
            writer: BufWriter::new(file),
            path: path.to_path_buf(),
            count: 0,
        })
    }

    pub fn write(
        &mut self,
        stage: Stage,
        id: &str,
        reasons: &[RejectReason],
        evidence: serde_json::Value,
    ) -> Result<(), CliError> {
        let line = json!({
            "id": id,
            "stage": stage.as_str(),
            "reasons": reasons,
            "evidence": evidence,
        });
        writeln!(self.writer, "{line}")
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", self.path.display())))?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64, CliError> {
        self.writer
            .flush()
            .map_err(|e| CliError::Data(format!("cannot flush {}: {e}", self.path.display())))?;
        Ok(self.count)
    }
}

/// Default rejection-log path for an output corpus.
pub fn default_rejections_path(output: &Path) -> PathBuf {
    output.with_extension("rejections.jsonl")
}

pub fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot open input {}: {e}", path.display())))
}

pub fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::Data(format!("cannot create directory {}: {e}", parent.display()))
            })?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot create output {}: {e}", path.display())))
}

pub fn corpus_error(e: CorpusError) -> CliError {
    CliError::Data(e.to_string())
}

/// What a per-record stage computation decided.
pub enum Outcome {
    Keep(Box<DatasetRecord>),
    Reject {
        id: String,
        reasons: Vec<RejectReason>,
        evidence: serde_json::Value,
    },
}

/// Streaming one-in/one-out stage driver: reads records, refuses re-applied
/// stages, routes rejects to the rejection log, writes kept records.
pub fn run_map_stage(
    ctx: &StageContext,
    stage: Stage,
    stage_name: &'static str,
    input: &Path,
    output: &Path,
    rejections: Option<&Path>,
    f: &mut dyn FnMut(DatasetRecord) -> Result<Outcome, CliError>,
) -> Result<StageSummary, CliError> {
    let reader = open_input(input)?;
    let mut writer = create_output(output)?;
    let rejections_path = rejections
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_rejections_path(output));
    let mut log = RejectionLog::create(&rejections_path)?;
    let mut summary = StageSummary::new(stage_name);

    for item in read_records(reader, ctx.config.parse_mode()) {
        let record = match item {
            Ok(record) => record,
            Err(e) if ctx.config.lenient => {
                eprintln!("{stage_name}: skipping line: {e}");
                summary.parse_errors += 1;
                continue;
            }
            Err(e) => return Err(corpus_error(e)),
        };
        summary.records_in += 1;
        refuse_reapplication(&record, stage, stage_name, ctx.force)?;
        match f(record)? {
            Outcome::Keep(record) => {
                write_record(&mut writer, &record).map_err(corpus_error)?;
                summary.records_out += 1;
            }
            Outcome::Reject {
                id,
                reasons,
                evidence,
            } => {
                log.write(stage, &id, &reasons, evidence)?;
                summary.rejected += 1;
            }
        }
    }
    writer
        .flush()
        .map_err(|e| CliError::Data(format!("cannot flush {}: {e}", output.display())))?;
    log.finish()?;
    Ok(summary)
}

/// Re-running a stage on its own output is refused unless forced.
pub fn refuse_reapplication(
    record: &DatasetRecord,
    stage: Stage,
    stage_name: &str,
    force: bool,
) -> Result<(), CliError> {
    if !force && record.has_stage(stage) {
        return Err(CliError::Dependency(format!(
            "record {:?} already carries the '{}' annotation; re-run '{}' with --force to overwrite",
            record.id, stage, stage_name
        )));
    }
    Ok(())
}

/// Fetch and decode a prerequisite stage's payload, naming the subcommand
/// that produces it when missing.
pub fn require_payload<T: DeserializeOwned>(
    record: &DatasetRecord,
    stage: Stage,
    producing_subcommand: &str,
) -> Result<T, CliError> {
    let attachment = record.attachment(stage).ok_or_else(|| {
        CliError::Dependency(format!(
            "record {:?} lacks the '{}' annotation: run the '{}' stage first",
            record.id, stage, producing_subcommand
        ))
    })?;
    serde_json::from_value(attachment.payload.clone()).map_err(|e| {
        CliError::Data(format!(
            "record {:?}: cannot decode '{}' payload: {e}",
            record.id, stage
        ))
    })
}

// --- payload schemas ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentedSub {
    pub index: usize,
    pub marker: String,
    pub char_span: [usize; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentedPayload {
    pub had_delimiters: bool,
    pub marker_config: subtraj_core::segmenter::MarkerConfig,
    pub subtrajectories: Vec<SegmentedSub>,
}

impl SegmentedPayload {
    pub fn from_subs(
        had_delimiters: bool,
        marker_config: &subtraj_core::segmenter::MarkerConfig,
        subs: &[Subtrajectory],
    ) -> Self {
        SegmentedPayload {
            had_delimiters,
            marker_config: marker_config.clone(),
            subtrajectories: subs
                .iter()
                .map(|s| SegmentedSub {
                    index: s.index,
                    marker: s.marker.clone(),
                    char_span: [s.char_span.0, s.char_span.1],
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgedSub {
    pub index: usize,
    pub effort: bool,
    pub effectiveness: bool,
    pub coherence: bool,
    pub preliminary_conclusion: bool,
    pub valid_verification: bool,
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub independent: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_criteria: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_independence: Option<String>,
}

impl JudgedSub {
    pub fn flags(&self) -> [bool; 5] {
        [
            self.effort,
            self.effectiveness,
            self.coherence,
            self.preliminary_conclusion,
            self.valid_verification,
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgedPayload {
    pub judge_id: String,
    pub backend: String,
    pub template_version: String,
    pub subtrajectories: Vec<JudgedSub>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevisedSub {
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub independent: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OriginalIndices {
    pub retained: Vec<usize>,
    pub eliminated: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevisedPayload {
    pub retained: Vec<usize>,
    pub eliminated: Vec<usize>,
    pub per_subtrajectory: BTreeMap<usize, RevisedSub>,
    pub rewrote_answer: bool,
    /// Pre-rewrite index sets, recorded when the answer was rewritten.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_indices: Option<OriginalIndices>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizerInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredPayload {
    #[serde(flatten)]
    pub scored: ScoredThinking,
    pub tokenizer: TokenizerInfo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledPayload {
    pub d: usize,
    pub chosen_j: u32,
    pub alpha: f64,
    pub kl: f64,
}

/// Thinking process plus subtrajectories, re-derived from the recorded
/// segmentation so the recorded spans stay authoritative.
pub fn load_segmentation(
    record: &DatasetRecord,
    delimiters: &subtraj_core::segmenter::Delimiters,
) -> Result<(ThinkingProcess, Vec<Subtrajectory>), CliError> {
    let payload: SegmentedPayload = require_payload(record, Stage::Segmented, "segment")?;
    let thinking = extract_thinking(&record.answer, delimiters).map_err(|e| {
        CliError::Data(format!(
            "record {:?}: answer no longer matches its segmentation: {e}",
            record.id
        ))
    })?;
    let spans: Vec<(usize, usize, String)> = payload
        .subtrajectories
        .iter()
        .map(|s| (s.char_span[0], s.char_span[1], s.marker.clone()))
        .collect();
    let subs = subtrajectories_from_spans(&thinking.text, &spans).map_err(|e| {
        CliError::Data(format!(
            "record {:?}: recorded segmentation does not fit the thinking text: {e}",
            record.id
        ))
    })?;
    Ok((thinking, subs))
}

pub fn tokenizer_from_config(config: &PipelineConfig) -> Result<Box<dyn Tokenizer>, CliError> {
    match config.tokenizer.kind {
        TokenizerKind::Rule => Ok(Box::new(RuleTokenizer)),
        TokenizerKind::Vocab => {
            let tokenizer = VocabTokenizer::from_file(Path::new(&config.tokenizer.vocab_file))
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Box::new(tokenizer))
        }
    }
}

pub fn templates_from_config(config: &PipelineConfig) -> Result<PromptTemplates, CliError> {
    let mut templates = PromptTemplates::default();
    let load = |path: &str| -> Result<Option<String>, CliError> {
        if path.is_empty() {
            return Ok(None);
        }
        std::fs::read_to_string(path)
            .map(Some)
            .map_err(|e| CliError::Config(format!("cannot read template {path}: {e}")))
    };
    if let Some(text) = load(&config.judge.criteria_template_file)? {
        templates = templates.with_criteria(text);
    }
    if let Some(text) = load(&config.judge.independence_template_file)? {
        templates = templates.with_independence(text);
    }
    Ok(templates)
}

/// Write a pretty JSON document with a trailing newline.
pub fn write_json_file(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut writer = create_output(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot render {}: {e}", path.display())))?;
    writer
        .write_all(text.as_bytes())
        .and_then(|_| writer.write_all(b"\n"))
        .and_then(|_| writer.flush())
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Run `f` over `items` with up to `workers` threads, preserving order.
pub fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send + Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let slots: Vec<std::sync::Mutex<Option<R>>> =
        items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let doubled = parallel_map(items, 8, |&x| x * 2);
        assert_eq!(doubled, (0..100).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn rejections_path_derivation() {
        assert_eq!(
            default_rejections_path(Path::new("out/corpus.jsonl")),
            Path::new("out/corpus.rejections.jsonl")
        );
    }
}

//! Quality and independence verdicts through pluggable judge backends.
//!
//! A backend completes a prompt into raw reply text; this module owns prompt
//! construction, strict reply parsing (five labeled YES/NO lines), one
//! automatic repair re-prompt on parse failure, capped-backoff retries on
//! transport failure, and a persistent verdict cache keyed by content hash.
//! Verdicts are never guessed: an unparseable reply after repair is a hard
//! error the caller must flag.

mod cache;
mod http;
mod prompts;
mod scripted;

pub use cache::{CacheError, VerdictCache};
pub use http::{HttpBackend, HttpBackendConfig};
pub use prompts::{
    build_criteria_prompt, build_grade_prompt, build_independence_prompt, build_solve_prompt,
    BuiltPrompt, PromptTemplates,
};
pub use scripted::{RecordScript, ScriptedJudge, SCRIPT_FIELD};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmenter::Subtrajectory;

/// The five criterion verdicts for one subtrajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionVerdicts {
    pub effort: bool,
    pub effectiveness: bool,
    pub coherence: bool,
    pub preliminary_conclusion: bool,
    pub valid_verification: bool,
    pub judge_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
}

impl CriterionVerdicts {
    pub fn from_flags(flags: [bool; 5], judge_id: impl Into<String>) -> Self {
        CriterionVerdicts {
            effort: flags[0],
            effectiveness: flags[1],
            coherence: flags[2],
            preliminary_conclusion: flags[3],
            valid_verification: flags[4],
            judge_id: judge_id.into(),
            raw_output: None,
        }
    }

    pub fn flags(&self) -> [bool; 5] {
        [
            self.effort,
            self.effectiveness,
            self.coherence,
            self.preliminary_conclusion,
            self.valid_verification,
        ]
    }

    /// Number of satisfied criteria, 0..=5.
    pub fn satisfied_count(&self) -> u8 {
        self.flags().iter().filter(|&&b| b).count() as u8
    }
}

/// Independence verdict for an already-suboptimal subtrajectory.
///
/// `independent` means nothing defined in the subtrajectory (parameters,
/// variables, expressions, conclusions, verifications) is used by later
/// content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndependenceVerdict {
    pub independent: bool,
    pub judge_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
}

/// What a backend is being asked to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Criteria,
    Independence,
    Solve,
    Grade,
}

/// One completion request handed to a backend.
#[derive(Debug, Clone)]
pub struct JudgeTask<'a> {
    pub kind: TaskKind,
    pub record_id: &'a str,
    pub sub_index: usize,
    pub prompt: &'a str,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("scripted backend: {0}")]
    Script(String),
}

impl BackendError {
    /// Transient failures worth retrying with backoff.
    pub fn retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A completion backend. Swapping backends changes verdict values only,
/// never downstream control flow.
pub trait JudgeBackend: Send + Sync {
    fn name(&self) -> &str;
    /// Identical request implies identical reply.
    fn deterministic(&self) -> bool;
    fn supports_batching(&self) -> bool {
        false
    }
    fn complete(&self, task: &JudgeTask<'_>) -> Result<String, BackendError>;
    /// Completed `complete` invocations so far (cache hits never count).
    fn calls(&self) -> u64;
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("backend {backend}: {source}")]
    Backend {
        backend: String,
        #[source]
        source: BackendError,
    },
    #[error("unparseable reply from {judge_id} for record {record_id:?} subtrajectory {sub_index}")]
    Unparseable {
        judge_id: String,
        record_id: String,
        sub_index: usize,
        last_reply: String,
    },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone)]
pub struct JudgeOptions {
    /// How many immediately preceding subtrajectories the criteria prompt
    /// includes.
    pub context_window: usize,
    /// Prompt budget in rule-tokenizer tokens; oldest preceding context is
    /// dropped first to fit.
    pub max_prompt_tokens: usize,
    pub max_retries: u32,
    pub retry_base_ms: u64,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        JudgeOptions {
            context_window: 2,
            max_prompt_tokens: 8192,
            max_retries: 3,
            retry_base_ms: 250,
        }
    }
}

/// Question plus preceding subtrajectories for a criteria judgment.
#[derive(Debug, Clone)]
pub struct CriteriaContext<'a> {
    pub record_id: &'a str,
    pub question: &'a str,
    pub preceding: &'a [Subtrajectory],
}

const REPAIR_SUFFIX: &str =
    "Your previous reply could not be parsed. Reply again using exactly the required lines and no other text.";

/// Judge orchestrator: prompt assembly, caching, retries, repair, parsing.
pub struct Judge<'a> {
    backend: &'a dyn JudgeBackend,
    cache: &'a VerdictCache,
    templates: PromptTemplates,
    opts: JudgeOptions,
}

impl<'a> Judge<'a> {
    pub fn new(
        backend: &'a dyn JudgeBackend,
        cache: &'a VerdictCache,
        templates: PromptTemplates,
        opts: JudgeOptions,
    ) -> Self {
        Judge {
            backend,
            cache,
            templates,
            opts,
        }
    }

    /// `backend-name:template-version`, recorded in every verdict.
    pub fn judge_id(&self) -> String {
        format!("{}:{}", self.backend.name(), self.templates.version)
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    /// Judge one subtrajectory against the five criteria.
    pub fn judge_criteria(
        &self,
        sub: &Subtrajectory,
        ctx: &CriteriaContext<'_>,
    ) -> Result<CriterionVerdicts, JudgeError> {
        let built = build_criteria_prompt(
            &self.templates,
            ctx.question,
            ctx.preceding,
            &sub.text,
            self.opts.context_window,
            self.opts.max_prompt_tokens,
        );
        let task = JudgeTask {
            kind: TaskKind::Criteria,
            record_id: ctx.record_id,
            sub_index: sub.index,
            prompt: &built.text,
        };
        let reply = self.complete_cached(&task)?;
        let (flags, final_reply) = match parse_criteria_reply(&reply) {
            Ok(flags) => (flags, reply),
            Err(_) => {
                let repaired = self.repair(&task)?;
                match parse_criteria_reply(&repaired) {
                    Ok(flags) => (flags, repaired),
                    Err(_) => {
                        return Err(JudgeError::Unparseable {
                            judge_id: self.judge_id(),
                            record_id: ctx.record_id.to_string(),
                            sub_index: sub.index,
                            last_reply: repaired,
                        })
                    }
                }
            }
        };
        let mut verdicts = CriterionVerdicts::from_flags(flags, self.judge_id());
        verdicts.raw_output = Some(built.annotate(final_reply));
        Ok(verdicts)
    }

    /// Judge independence of a suboptimal subtrajectory from everything that
    /// follows it. Callers never invoke this for the final subtrajectory.
    pub fn judge_independence(
        &self,
        sub: &Subtrajectory,
        subsequent_context: &str,
        record_id: &str,
    ) -> Result<IndependenceVerdict, JudgeError> {
        let built = build_independence_prompt(
            &self.templates,
            &sub.text,
            subsequent_context,
            self.opts.max_prompt_tokens,
        );
        let task = JudgeTask {
            kind: TaskKind::Independence,
            record_id,
            sub_index: sub.index,
            prompt: &built.text,
        };
        let reply = self.complete_cached(&task)?;
        let (independent, final_reply) = match parse_independence_reply(&reply) {
            Ok(v) => (v, reply),
            Err(_) => {
                let repaired = self.repair(&task)?;
                match parse_independence_reply(&repaired) {
                    Ok(v) => (v, repaired),
                    Err(_) => {
                        return Err(JudgeError::Unparseable {
                            judge_id: self.judge_id(),
                            record_id: record_id.to_string(),
                            sub_index: sub.index,
                            last_reply: repaired,
                        })
                    }
                }
            }
        };
        Ok(IndependenceVerdict {
            independent,
            judge_id: self.judge_id(),
            raw_output: Some(built.annotate(final_reply)),
        })
    }

    fn repair(&self, task: &JudgeTask<'_>) -> Result<String, JudgeError> {
        let prompt = format!("{}\n\n{}", task.prompt, REPAIR_SUFFIX);
        let repair_task = JudgeTask {
            prompt: &prompt,
            ..task.clone()
        };
        self.complete_cached(&repair_task)
    }

    /// Cache lookup, then backend call with capped exponential backoff.
    fn complete_cached(&self, task: &JudgeTask<'_>) -> Result<String, JudgeError> {
        let key = VerdictCache::key(&self.templates.version, self.backend.name(), task.prompt);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let mut attempt = 0u32;
        let reply = loop {
            match self.backend.complete(task) {
                Ok(reply) => break reply,
                Err(e) if e.retryable() && attempt < self.opts.max_retries => {
                    let delay = self
                        .opts
                        .retry_base_ms
                        .saturating_mul(1 << attempt.min(4))
                        .min(4_000);
                    if delay > 0 {
                        std::thread::sleep(std::time::Duration::from_millis(delay));
                    }
                    attempt += 1;
                }
                Err(e) => {
                    return Err(JudgeError::Backend {
                        backend: self.backend.name().to_string(),
                        source: e,
                    })
                }
            }
        };
        self.cache.put(&key, &reply)?;
        Ok(reply)
    }
}

const CRITERIA_LABELS: [&str; 5] = [
    "EFFORT",
    "EFFECTIVENESS",
    "COHERENCE",
    "PRELIMINARY_CONCLUSION",
    "VALID_VERIFICATION",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseReplyError {
    #[error("missing line for {0}")]
    Missing(&'static str),
    #[error("duplicate line for {0}")]
    Duplicate(&'static str),
    #[error("unrecognized verdict value {0:?}")]
    BadValue(String),
}

fn parse_labeled_lines(reply: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for line in reply.lines() {
        let line = line.trim().trim_start_matches(['-', '*', '•']).trim();
        if let Some((label, value)) = line.split_once(':') {
            let label = label.trim().to_ascii_uppercase().replace(' ', "_");
            let value = value.trim().to_string();
            out.push((label, value));
        }
    }
    out
}

fn parse_yes_no(value: &str) -> Result<bool, ParseReplyError> {
    let word = value
        .split_whitespace()
        .next()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_ascii_alphabetic())
        .to_ascii_uppercase();
    match word.as_str() {
        "YES" => Ok(true),
        "NO" => Ok(false),
        _ => Err(ParseReplyError::BadValue(value.to_string())),
    }
}

/// Parse the five labeled YES/NO lines of a criteria reply.
///
/// Each label must appear exactly once; unrelated lines are ignored; every
/// value must be an unambiguous YES or NO. Anything else is unparseable —
/// verdicts are never coerced.
pub fn parse_criteria_reply(reply: &str) -> Result<[bool; 5], ParseReplyError> {
    let lines = parse_labeled_lines(reply);
    let mut flags = [None::<bool>; 5];
    for (label, value) in lines {
        if let Some(i) = CRITERIA_LABELS.iter().position(|&l| l == label) {
            if flags[i].is_some() {
                return Err(ParseReplyError::Duplicate(CRITERIA_LABELS[i]));
            }
            flags[i] = Some(parse_yes_no(&value)?);
        }
    }
    let mut out = [false; 5];
    for i in 0..5 {
        out[i] = flags[i].ok_or(ParseReplyError::Missing(CRITERIA_LABELS[i]))?;
    }
    Ok(out)
}

/// Parse an `INDEPENDENT: YES|NO` reply.
pub fn parse_independence_reply(reply: &str) -> Result<bool, ParseReplyError> {
    let mut found = None;
    for (label, value) in parse_labeled_lines(reply) {
        if label == "INDEPENDENT" {
            if found.is_some() {
                return Err(ParseReplyError::Duplicate("INDEPENDENT"));
            }
            found = Some(parse_yes_no(&value)?);
        }
    }
    found.ok_or(ParseReplyError::Missing("INDEPENDENT"))
}

/// Parse a `VERDICT: CORRECT|INCORRECT` grading reply.
pub fn parse_grade_reply(reply: &str) -> Result<bool, ParseReplyError> {
    let mut found = None;
    for (label, value) in parse_labeled_lines(reply) {
        if label == "VERDICT" {
            if found.is_some() {
                return Err(ParseReplyError::Duplicate("VERDICT"));
            }
            let word = value
                .split_whitespace()
                .next()
                .unwrap_or("")
                .trim_matches(|c: char| !c.is_ascii_alphabetic())
                .to_ascii_uppercase();
            found = Some(match word.as_str() {
                "CORRECT" => true,
                "INCORRECT" => false,
                _ => return Err(ParseReplyError::BadValue(value)),
            });
        }
    }
    found.ok_or(ParseReplyError::Missing("VERDICT"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmenter::Subtrajectory;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn sub(index: usize, text: &str) -> Subtrajectory {
        Subtrajectory {
            index,
            text: text.to_string(),
            marker: if index == 0 { "preamble" } else { "Alternatively" }.to_string(),
            char_span: (0, text.chars().count()),
        }
    }

    #[test]
    fn parses_canonical_reply() {
        let reply = "EFFORT: YES\nEFFECTIVENESS: NO\nCOHERENCE: YES\nPRELIMINARY_CONCLUSION: YES\nVALID_VERIFICATION: NO\n";
        assert_eq!(
            parse_criteria_reply(reply).unwrap(),
            [true, false, true, true, false]
        );
    }

    #[test]
    fn parser_tolerates_bullets_case_and_spacing() {
        let reply = "- effort: yes\n* Effectiveness:   NO.\npreliminary conclusion: Yes\nCOHERENCE: yes\n  valid verification: no\nsome commentary line\n";
        assert_eq!(
            parse_criteria_reply(reply).unwrap(),
            [true, false, true, true, false]
        );
    }

    #[test]
    fn parser_rejects_missing_duplicate_and_vague() {
        let missing = "EFFORT: YES\nEFFECTIVENESS: NO\n";
        assert!(matches!(
            parse_criteria_reply(missing),
            Err(ParseReplyError::Missing(_))
        ));
        let dup = "EFFORT: YES\nEFFORT: NO\nEFFECTIVENESS: NO\nCOHERENCE: YES\nPRELIMINARY_CONCLUSION: YES\nVALID_VERIFICATION: NO";
        assert!(matches!(
            parse_criteria_reply(dup),
            Err(ParseReplyError::Duplicate(_))
        ));
        let vague = "EFFORT: NOT SURE\nEFFECTIVENESS: NO\nCOHERENCE: YES\nPRELIMINARY_CONCLUSION: YES\nVALID_VERIFICATION: NO";
        assert!(matches!(
            parse_criteria_reply(vague),
            Err(ParseReplyError::BadValue(_))
        ));
    }

    #[test]
    fn parses_independence_and_grade() {
        assert!(parse_independence_reply("INDEPENDENT: YES").unwrap());
        assert!(!parse_independence_reply("independent: no\n").unwrap());
        assert!(parse_independence_reply("nothing here").is_err());
        assert!(parse_grade_reply("VERDICT: CORRECT").unwrap());
        assert!(!parse_grade_reply("verdict: incorrect").unwrap());
        assert!(parse_grade_reply("VERDICT: maybe").is_err());
    }

    /// Test-only backend: serves replies from a queue, counts calls.
    struct QueueBackend {
        replies: std::sync::Mutex<Vec<Result<String, BackendError>>>,
        calls: AtomicU64,
    }

    impl QueueBackend {
        fn new(replies: Vec<Result<String, BackendError>>) -> Self {
            QueueBackend {
                replies: std::sync::Mutex::new(replies),
                calls: AtomicU64::new(0),
            }
        }
    }

    impl JudgeBackend for QueueBackend {
        fn name(&self) -> &str {
            "queue"
        }
        fn deterministic(&self) -> bool {
            true
        }
        fn complete(&self, _task: &JudgeTask<'_>) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut q = self.replies.lock().unwrap();
            if q.is_empty() {
                Err(BackendError::Script("queue exhausted".into()))
            } else {
                q.remove(0)
            }
        }
        fn calls(&self) -> u64 {
            self.calls.load(Ordering::SeqCst)
        }
    }

    const GOOD: &str = "EFFORT: YES\nEFFECTIVENESS: YES\nCOHERENCE: YES\nPRELIMINARY_CONCLUSION: YES\nVALID_VERIFICATION: YES";

    fn zero_backoff() -> JudgeOptions {
        JudgeOptions {
            retry_base_ms: 0,
            ..JudgeOptions::default()
        }
    }

    #[test]
    fn identical_inputs_hit_cache_with_zero_backend_calls() {
        let backend = QueueBackend::new(vec![Ok(GOOD.into()), Ok(GOOD.into())]);
        let cache = VerdictCache::in_memory();
        let judge = Judge::new(&backend, &cache, PromptTemplates::default(), zero_backoff());
        let s = sub(0, "try the substitution u = x - 1 and expand.");
        let ctx = CriteriaContext {
            record_id: "r1",
            question: "solve it",
            preceding: &[],
        };
        let first = judge.judge_criteria(&s, &ctx).unwrap();
        assert_eq!(backend.calls(), 1);
        let second = judge.judge_criteria(&s, &ctx).unwrap();
        assert_eq!(backend.calls(), 1, "second call must be served from cache");
        assert_eq!(first.flags(), second.flags());
    }

    #[test]
    fn repair_reprompt_recovers_then_hard_flags() {
        // First reply junk, repair reply good.
        let backend = QueueBackend::new(vec![Ok("hmm".into()), Ok(GOOD.into())]);
        let cache = VerdictCache::in_memory();
        let judge = Judge::new(&backend, &cache, PromptTemplates::default(), zero_backoff());
        let s = sub(0, "compute the discriminant directly.");
        let ctx = CriteriaContext {
            record_id: "r1",
            question: "q",
            preceding: &[],
        };
        let v = judge.judge_criteria(&s, &ctx).unwrap();
        assert_eq!(v.satisfied_count(), 5);
        assert_eq!(backend.calls(), 2);

        // Junk twice: hard unparseable, never guessed.
        let backend = QueueBackend::new(vec![Ok("junk".into()), Ok("junk again".into())]);
        let cache = VerdictCache::in_memory();
        let judge = Judge::new(&backend, &cache, PromptTemplates::default(), zero_backoff());
        let err = judge.judge_criteria(&s, &ctx).unwrap_err();
        assert!(matches!(err, JudgeError::Unparseable { sub_index: 0, .. }));
    }

    #[test]
    fn transport_failures_retry_then_surface() {
        let backend = QueueBackend::new(vec![
            Err(BackendError::Transport("reset".into())),
            Err(BackendError::Http {
                status: 503,
                body: "busy".into(),
            }),
            Ok(GOOD.into()),
        ]);
        let cache = VerdictCache::in_memory();
        let judge = Judge::new(&backend, &cache, PromptTemplates::default(), zero_backoff());
        let s = sub(0, "text");
        let ctx = CriteriaContext {
            record_id: "r",
            question: "q",
            preceding: &[],
        };
        assert!(judge.judge_criteria(&s, &ctx).is_ok());
        assert_eq!(backend.calls(), 3);

        // Non-retryable surfaces immediately.
        let backend = QueueBackend::new(vec![Err(BackendError::Http {
            status: 401,
            body: "no auth".into(),
        })]);
        let cache = VerdictCache::in_memory();
        let judge = Judge::new(&backend, &cache, PromptTemplates::default(), zero_backoff());
        let err = judge.judge_criteria(&s, &ctx).unwrap_err();
        assert!(matches!(err, JudgeError::Backend { .. }));
        assert_eq!(backend.calls(), 1);
    }
}

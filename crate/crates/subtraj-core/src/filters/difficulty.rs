//! Difficulty filtering: drop records weaker models already solve.
//!
//! Two solver clients each produce a fixed number of answer attempts; a
//! grader compares every attempt to the record's ground truth. One correct
//! attempt anywhere means the question is too easy. Records without an
//! extractable ground truth (no boxed answer) are dropped too.
//!
//! HTTP solver/grader clients reuse the judge backend and verdict cache;
//! scripted variants keep tests and CI hermetic.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use super::{extract_boxed_answer, FilterVerdict, RejectReason};
use crate::corpus::DatasetRecord;
use crate::judge::{
    build_grade_prompt, build_solve_prompt, parse_grade_reply, BackendError, HttpBackend,
    JudgeBackend, JudgeError, JudgeTask, PromptTemplates, RecordScript, TaskKind, VerdictCache,
};
use crate::segmenter::{extract_thinking, Delimiters};

/// Produces one answer attempt for a question.
pub trait SolverClient: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, record_id: &str, question: &str, attempt: usize) -> Result<String, JudgeError>;
    fn calls(&self) -> u64;
}

/// Decides whether a candidate answer matches the ground truth.
pub trait GraderClient: Send + Sync {
    fn name(&self) -> &str;
    fn grade(&self, question: &str, candidate: &str, ground_truth: &str) -> Result<bool, JudgeError>;
    fn calls(&self) -> u64;
}

/// Scripted solver: answers come from the `scripted.solver[slot][attempt]`
/// table of fixture records.
pub struct ScriptedSolver {
    slot: usize,
    answers: RwLock<HashMap<String, Vec<Vec<String>>>>,
    calls: AtomicU64,
}

impl ScriptedSolver {
    pub fn new(slot: usize) -> Self {
        ScriptedSolver {
            slot,
            answers: RwLock::new(HashMap::new()),
            calls: AtomicU64::new(0),
        }
    }

    pub fn register(&self, record_id: impl Into<String>, per_solver_answers: Vec<Vec<String>>) {
        self.answers
            .write()
            .unwrap()
            .insert(record_id.into(), per_solver_answers);
    }

    pub fn register_record(&self, record: &DatasetRecord) -> Result<bool, serde_json::Error> {
        match RecordScript::from_record(record) {
            Some(script) => {
                let script = script?;
                if script.solver.is_empty() {
                    return Ok(false);
                }
                self.register(record.id.clone(), script.solver);
                Ok(true)
            }
            None => Ok(false),
        }
    }
}

impl SolverClient for ScriptedSolver {
    fn name(&self) -> &str {
        "scripted-solver"
    }

    fn solve(&self, record_id: &str, _question: &str, attempt: usize) -> Result<String, JudgeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let answers = self.answers.read().unwrap();
        answers
            .get(record_id)
            .and_then(|per_solver| per_solver.get(self.slot))
            .and_then(|attempts| attempts.get(attempt))
            .cloned()
            .ok_or_else(|| JudgeError::Backend {
                backend: "scripted-solver".into(),
                source: BackendError::Script(format!(
                    "no scripted answer for record {record_id:?} solver {} attempt {attempt}",
                    self.slot
                )),
            })
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Scripted grader: trimmed string equality against the ground truth.
#[derive(Default)]
pub struct ExactMatchGrader {
    calls: AtomicU64,
}

impl ExactMatchGrader {
    pub fn new() -> Self {
        Self::default()
    }
}

impl GraderClient for ExactMatchGrader {
    fn name(&self) -> &str {
        "exact-match"
    }

    fn grade(&self, _question: &str, candidate: &str, ground_truth: &str) -> Result<bool, JudgeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(candidate.trim() == ground_truth.trim())
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Remote solver over the HTTP judge backend, with caching. The attempt
/// number is baked into the prompt, so attempts stay distinct generations
/// and distinct cache entries.
pub struct HttpSolver<'a> {
    backend: &'a HttpBackend,
    cache: &'a VerdictCache,
    templates: &'a PromptTemplates,
    label: String,
}

impl<'a> HttpSolver<'a> {
    pub fn new(
        backend: &'a HttpBackend,
        cache: &'a VerdictCache,
        templates: &'a PromptTemplates,
        label: impl Into<String>,
    ) -> Self {
        HttpSolver {
            backend,
            cache,
            templates,
            label: label.into(),
        }
    }
}

fn cached_complete(
    backend: &dyn JudgeBackend,
    cache: &VerdictCache,
    template_version: &str,
    cache_scope: &str,
    task: &JudgeTask<'_>,
) -> Result<String, JudgeError> {
    let scoped = format!("{}:{}", cache_scope, backend.name());
    let key = VerdictCache::key(template_version, &scoped, task.prompt);
    if let Some(hit) = cache.get(&key) {
        return Ok(hit);
    }
    let reply = backend.complete(task).map_err(|source| JudgeError::Backend {
        backend: backend.name().to_string(),
        source,
    })?;
    cache.put(&key, &reply)?;
    Ok(reply)
}

impl SolverClient for HttpSolver<'_> {
    fn name(&self) -> &str {
        &self.label
    }

    fn solve(&self, record_id: &str, question: &str, attempt: usize) -> Result<String, JudgeError> {
        let prompt = build_solve_prompt(self.templates, question, attempt);
        let task = JudgeTask {
            kind: TaskKind::Solve,
            record_id,
            sub_index: attempt,
            prompt: &prompt,
        };
        cached_complete(
            self.backend,
            self.cache,
            &self.templates.version,
            &self.label,
            &task,
        )
    }

    fn calls(&self) -> u64 {
        self.backend.calls()
    }
}

/// Remote grader over the HTTP judge backend, with caching and strict
/// CORRECT/INCORRECT parsing. An unparseable grade is an error, not a guess.
pub struct HttpGrader<'a> {
    backend: &'a HttpBackend,
    cache: &'a VerdictCache,
    templates: &'a PromptTemplates,
}

impl<'a> HttpGrader<'a> {
    pub fn new(
        backend: &'a HttpBackend,
        cache: &'a VerdictCache,
        templates: &'a PromptTemplates,
    ) -> Self {
        HttpGrader {
            backend,
            cache,
            templates,
        }
    }
}

impl GraderClient for HttpGrader<'_> {
    fn name(&self) -> &str {
        "http-grader"
    }

    fn grade(&self, question: &str, candidate: &str, ground_truth: &str) -> Result<bool, JudgeError> {
        let prompt = build_grade_prompt(self.templates, question, candidate, ground_truth);
        let task = JudgeTask {
            kind: TaskKind::Grade,
            record_id: "",
            sub_index: 0,
            prompt: &prompt,
        };
        let reply = cached_complete(
            self.backend,
            self.cache,
            &self.templates.version,
            "grade",
            &task,
        )?;
        parse_grade_reply(&reply).map_err(|_| JudgeError::Unparseable {
            judge_id: format!("{}:{}", self.backend.name(), self.templates.version),
            record_id: String::new(),
            sub_index: 0,
            last_reply: reply,
        })
    }

    fn calls(&self) -> u64 {
        self.backend.calls()
    }
}

/// Ground truth for grading: the explicit field when present, otherwise the
/// last boxed span of the post-thinking answer text.
pub fn ground_truth_of(record: &DatasetRecord, delimiters: &Delimiters) -> Option<String> {
    if let Some(gt) = &record.ground_truth {
        if !gt.is_empty() {
            return Some(gt.clone());
        }
    }
    let final_answer = match extract_thinking(&record.answer, delimiters) {
        Ok(tp) => tp.final_answer,
        Err(_) => return None,
    };
    // Fall back to the whole answer when there was no delimited thinking.
    let haystack = if final_answer.is_empty() {
        record.answer.as_str()
    } else {
        return extract_boxed_answer(&final_answer);
    };
    extract_boxed_answer(haystack)
}

/// Exclude a record iff any of the `solvers × attempts_per_solver` attempts
/// grades correct, or no ground truth is extractable.
///
/// Attempts run in a fixed order (solver 0 attempt 0, attempt 1, solver 1,
/// ...) and stop at the first correct one. Transport or parse failures
/// propagate; the caller flags the record rather than guessing.
pub fn difficulty_filter(
    record: &DatasetRecord,
    solvers: &[&dyn SolverClient],
    attempts_per_solver: usize,
    grader: &dyn GraderClient,
    delimiters: &Delimiters,
) -> Result<FilterVerdict, JudgeError> {
    let Some(ground_truth) = ground_truth_of(record, delimiters) else {
        return Ok(FilterVerdict::reject(vec![RejectReason::NoBoxedAnswer]));
    };
    for solver in solvers {
        for attempt in 0..attempts_per_solver {
            let candidate = solver.solve(&record.id, &record.question, attempt)?;
            // Solver answers may bury the result in prose; grade the boxed
            // span when there is one.
            let graded = extract_boxed_answer(&candidate).unwrap_or(candidate);
            if grader.grade(&record.question, &graded, &ground_truth)? {
                return Ok(FilterVerdict::reject(vec![RejectReason::TooEasy]));
            }
        }
    }
    Ok(FilterVerdict::keep())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_with_truth(id: &str, truth: &str) -> DatasetRecord {
        DatasetRecord::new(
            id,
            "What is 6 times 7?",
            format!("<think>6·7 = 42.</think>The answer is boxed{{{truth}}}."),
        )
    }

    fn scripted(slot: usize, answers: &[(&str, Vec<Vec<&str>>)]) -> ScriptedSolver {
        let solver = ScriptedSolver::new(slot);
        for (id, per_solver) in answers {
            solver.register(
                *id,
                per_solver
                    .iter()
                    .map(|v| v.iter().map(|s| s.to_string()).collect())
                    .collect(),
            );
        }
        solver
    }

    #[test]
    fn one_correct_attempt_rejects_as_too_easy() {
        let record = record_with_truth("r1", "42");
        let s0 = scripted(0, &[("r1", vec![vec!["41", "boxed{42}"], vec!["40", "39"]])]);
        let s1 = scripted(1, &[("r1", vec![vec!["41", "boxed{42}"], vec!["40", "39"]])]);
        let grader = ExactMatchGrader::new();
        let verdict = difficulty_filter(
            &record,
            &[&s0, &s1],
            2,
            &grader,
            &Delimiters::default(),
        )
        .unwrap();
        assert!(!verdict.keep);
        assert_eq!(verdict.reasons, [RejectReason::TooEasy]);
    }

    #[test]
    fn zero_correct_attempts_keeps_the_record() {
        let record = record_with_truth("r1", "42");
        let table = vec![vec!["1", "2"], vec!["3", "4"]];
        let s0 = scripted(0, &[("r1", table.clone())]);
        let s1 = scripted(1, &[("r1", table)]);
        let grader = ExactMatchGrader::new();
        let verdict = difficulty_filter(
            &record,
            &[&s0, &s1],
            2,
            &grader,
            &Delimiters::default(),
        )
        .unwrap();
        assert!(verdict.keep);
        assert_eq!(s0.calls() + s1.calls(), 4, "all four attempts consulted");
    }

    #[test]
    fn missing_ground_truth_rejects_without_solving() {
        let record = DatasetRecord::new(
            "r1",
            "What is 6 times 7?",
            "<think>I forget.</think>The answer is forty-two, probably.",
        );
        let s0 = ScriptedSolver::new(0);
        let grader = ExactMatchGrader::new();
        let verdict =
            difficulty_filter(&record, &[&s0], 2, &grader, &Delimiters::default()).unwrap();
        assert!(!verdict.keep);
        assert_eq!(verdict.reasons, [RejectReason::NoBoxedAnswer]);
        assert_eq!(s0.calls(), 0, "no boxed answer means no solver calls");
    }

    #[test]
    fn ground_truth_prefers_explicit_field() {
        let mut record = record_with_truth("r1", "42");
        record.ground_truth = Some("41".into());
        assert_eq!(
            ground_truth_of(&record, &Delimiters::default()).as_deref(),
            Some("41")
        );
        record.ground_truth = None;
        assert_eq!(
            ground_truth_of(&record, &Delimiters::default()).as_deref(),
            Some("42")
        );
    }

    #[test]
    fn missing_script_surfaces_as_error() {
        let record = record_with_truth("r-unknown", "42");
        let s0 = ScriptedSolver::new(0);
        let grader = ExactMatchGrader::new();
        let err = difficulty_filter(&record, &[&s0], 1, &grader, &Delimiters::default());
        assert!(err.is_err());
    }

    #[test]
    fn exhaustive_rule_over_correctness_patterns_and_boxedness() {
        // 4 attempts → 16 correctness patterns, times boxed/unboxed ground
        // truth. Excluded iff any attempt correct or no boxed answer.
        for boxed in [true, false] {
            for pattern in 0u8..16 {
                let id = format!("r{boxed}{pattern}");
                let record = if boxed {
                    record_with_truth(&id, "7")
                } else {
                    DatasetRecord::new(&id, "q?", "<think>t.</think>no marker")
                };
                let answer = |bit: u8| {
                    if pattern & bit != 0 { "7" } else { "wrong" }.to_string()
                };
                let s0 = ScriptedSolver::new(0);
                s0.register(id.clone(), vec![vec![answer(1), answer(2)]]);
                let s1 = ScriptedSolver::new(1);
                s1.register(id.clone(), vec![vec![], vec![answer(4), answer(8)]]);
                let grader = ExactMatchGrader::new();
                let verdict = difficulty_filter(
                    &record,
                    &[&s0, &s1],
                    2,
                    &grader,
                    &Delimiters::default(),
                )
                .unwrap();
                let expect_keep = boxed && pattern == 0;
                assert_eq!(verdict.keep, expect_keep, "boxed={boxed} pattern={pattern:04b}");
                if !boxed {
                    assert_eq!(verdict.reasons, [RejectReason::NoBoxedAnswer]);
                } else if pattern != 0 {
                    assert_eq!(verdict.reasons, [RejectReason::TooEasy]);
                }
            }
        }
    }
}

//! Scripted judge backend: verdicts read from fixture annotations.
//!
//! Fixture records carry a top-level `scripted` field with the verdicts a
//! perfect judge would return. The backend formats those verdicts as the
//! canonical reply text, so the whole parse/cache/flag machinery is
//! exercised exactly as with a live backend. This is the test and CI
//! workhorse: with it, the full pipeline is bit-deterministic.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{BackendError, JudgeBackend, JudgeTask, TaskKind};
use crate::corpus::DatasetRecord;

/// Top-level record field holding scripted verdicts.
pub const SCRIPT_FIELD: &str = "scripted";

/// Scripted verdicts for one record.
///
/// `criteria[i]` is the five-flag verdict for subtrajectory `i`;
/// `independence[i]` is its independence verdict, `None` where the question
/// never arises (optimal or final subtrajectories); `solver[s][a]` is solver
/// `s`'s answer on attempt `a`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordScript {
    #[serde(default)]
    pub criteria: Vec<[bool; 5]>,
    #[serde(default)]
    pub independence: Vec<Option<bool>>,
    #[serde(default)]
    pub solver: Vec<Vec<String>>,
}

impl RecordScript {
    /// Extract the script from a record's `scripted` field, if present.
    pub fn from_record(record: &DatasetRecord) -> Option<Result<RecordScript, serde_json::Error>> {
        record
            .extra
            .get(SCRIPT_FIELD)
            .map(|v| serde_json::from_value(v.clone()))
    }
}

pub struct ScriptedJudge {
    scripts: RwLock<HashMap<String, RecordScript>>,
    calls: AtomicU64,
}

impl Default for ScriptedJudge {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedJudge {
    pub fn new() -> Self {
        ScriptedJudge {
            scripts: RwLock::new(HashMap::new()),
            calls: AtomicU64::new(0),
        }
    }

    pub fn register(&self, record_id: impl Into<String>, script: RecordScript) {
        self.scripts.write().unwrap().insert(record_id.into(), script);
    }

    /// Register a record's own `scripted` field. Returns whether a script
    /// was found.
    pub fn register_record(&self, record: &DatasetRecord) -> Result<bool, serde_json::Error> {
        match RecordScript::from_record(record) {
            Some(script) => {
                self.register(record.id.clone(), script?);
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn lookup(
        &self,
        record_id: &str,
        f: impl FnOnce(&RecordScript) -> Result<String, BackendError>,
    ) -> Result<String, BackendError> {
        let scripts = self.scripts.read().unwrap();
        match scripts.get(record_id) {
            Some(script) => f(script),
            None => Err(BackendError::Script(format!(
                "no scripted verdicts registered for record {record_id:?}"
            ))),
        }
    }
}

fn format_criteria_reply(flags: &[bool; 5]) -> String {
    let yn = |b: bool| if b { "YES" } else { "NO" };
    format!(
        "EFFORT: {}\nEFFECTIVENESS: {}\nCOHERENCE: {}\nPRELIMINARY_CONCLUSION: {}\nVALID_VERIFICATION: {}",
        yn(flags[0]),
        yn(flags[1]),
        yn(flags[2]),
        yn(flags[3]),
        yn(flags[4])
    )
}

impl JudgeBackend for ScriptedJudge {
    fn name(&self) -> &str {
        "scripted"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn complete(&self, task: &JudgeTask<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match task.kind {
            TaskKind::Criteria => self.lookup(task.record_id, |script| {
                script
                    .criteria
                    .get(task.sub_index)
                    .map(format_criteria_reply)
                    .ok_or_else(|| {
                        BackendError::Script(format!(
                            "record {:?} has no scripted criteria for subtrajectory {}",
                            task.record_id, task.sub_index
                        ))
                    })
            }),
            TaskKind::Independence => self.lookup(task.record_id, |script| {
                match script.independence.get(task.sub_index) {
                    Some(Some(independent)) => Ok(format!(
                        "INDEPENDENT: {}",
                        if *independent { "YES" } else { "NO" }
                    )),
                    _ => Err(BackendError::Script(format!(
                        "record {:?} has no scripted independence verdict for subtrajectory {}",
                        task.record_id, task.sub_index
                    ))),
                }
            }),
            TaskKind::Solve | TaskKind::Grade => Err(BackendError::Script(
                "scripted judge backend does not handle solver or grader tasks".into(),
            )),
        }
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::{
        CriteriaContext, Judge, JudgeOptions, PromptTemplates, VerdictCache,
    };
    use crate::segmenter::Subtrajectory;
    use serde_json::json;

    fn sub(index: usize, text: &str) -> Subtrajectory {
        Subtrajectory {
            index,
            text: text.to_string(),
            marker: "Alternatively".into(),
            char_span: (0, text.chars().count()),
        }
    }

    #[test]
    fn all_true_script_passes_through() {
        let backend = ScriptedJudge::new();
        backend.register(
            "r1",
            RecordScript {
                criteria: vec![[true; 5]],
                ..RecordScript::default()
            },
        );
        let cache = VerdictCache::in_memory();
        let judge = Judge::new(&backend, &cache, PromptTemplates::default(), JudgeOptions::default());
        let v = judge
            .judge_criteria(
                &sub(0, "expand the square and collect terms; x = 3."),
                &CriteriaContext {
                    record_id: "r1",
                    question: "find x",
                    preceding: &[],
                },
            )
            .unwrap();
        assert_eq!(v.flags(), [true; 5]);
        assert_eq!(v.judge_id, "scripted:v1");
    }

    #[test]
    fn method_named_but_never_applied_fails_effort_only() {
        // A segment that names an approach without carrying it out: the
        // reference script marks Effort unmet and everything else met.
        let backend = ScriptedJudge::new();
        backend.register(
            "r1",
            RecordScript {
                criteria: vec![[false, true, true, true, true]],
                ..RecordScript::default()
            },
        );
        let cache = VerdictCache::in_memory();
        let judge = Judge::new(&backend, &cache, PromptTemplates::default(), JudgeOptions::default());
        let v = judge
            .judge_criteria(
                &sub(
                    0,
                    "Alternatively, a generating-function argument might settle this, \
                     though setting one up here could get messy.",
                ),
                &CriteriaContext {
                    record_id: "r1",
                    question: "count the arrangements",
                    preceding: &[],
                },
            )
            .unwrap();
        assert!(!v.effort);
        assert!(v.effectiveness && v.coherence && v.preliminary_conclusion && v.valid_verification);
    }

    #[test]
    fn independence_verdicts_pass_through() {
        let backend = ScriptedJudge::new();
        backend.register(
            "r1",
            RecordScript {
                criteria: vec![[false, true, true, true, true], [true; 5], [true; 5]],
                independence: vec![Some(false), None, None],
                ..RecordScript::default()
            },
        );
        let cache = VerdictCache::in_memory();
        let judge = Judge::new(&backend, &cache, PromptTemplates::default(), JudgeOptions::default());
        let v = judge
            .judge_independence(
                &sub(0, "define the area as half the product of the diagonals."),
                "using the area expression from before, plug in d1 = 6 ...",
                "r1",
            )
            .unwrap();
        assert!(!v.independent);
    }

    #[test]
    fn missing_script_is_a_hard_error() {
        let backend = ScriptedJudge::new();
        let cache = VerdictCache::in_memory();
        let judge = Judge::new(&backend, &cache, PromptTemplates::default(), JudgeOptions::default());
        let err = judge
            .judge_criteria(
                &sub(0, "text"),
                &CriteriaContext {
                    record_id: "unknown",
                    question: "q",
                    preceding: &[],
                },
            )
            .unwrap_err();
        assert!(err.to_string().contains("unknown"));
    }

    #[test]
    fn register_record_reads_the_scripted_field() {
        let mut record = DatasetRecord::new("r9", "q", "<think>t</think>f");
        record.extra.insert(
            SCRIPT_FIELD.into(),
            json!({"criteria": [[true, true, false, true, true]], "independence": [null]}),
        );
        let backend = ScriptedJudge::new();
        assert!(backend.register_record(&record).unwrap());
        let plain = DatasetRecord::new("r10", "q", "a");
        assert!(!backend.register_record(&plain).unwrap());
    }
}

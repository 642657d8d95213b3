//! Shared fixtures and binary-invocation helpers for integration tests.

#![allow(dead_code)]

use std::io::Write;
use std::path::Path;
use std::process::Command;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Deterministic synthetic trace: one preamble plus `criteria.len() - 1`
/// marker-opened subtrajectories, scripted verdicts attached. `bulk[i]`
/// pads subtrajectory `i` with extra sentences to vary token counts.
pub struct TraceSpec {
    pub id: String,
    pub question: String,
    pub criteria: Vec<[bool; 5]>,
    pub independence: Vec<Option<bool>>,
    pub bulk: Vec<usize>,
    pub final_answer: String,
    pub solver: Option<Vec<Vec<String>>>,
}

impl TraceSpec {
    pub fn simple(id: &str, criteria: Vec<[bool; 5]>, independence: Vec<Option<bool>>) -> Self {
        let bulk = vec![1; criteria.len()];
        TraceSpec {
            id: id.to_string(),
            question: format!("Question {id}: compute the quantity and give one number."),
            criteria,
            independence,
            bulk,
            final_answer: "The final result is boxed{42}.".to_string(),
            solver: None,
        }
    }

    pub fn render(&self) -> Value {
        assert_eq!(self.criteria.len(), self.independence.len());
        assert_eq!(self.criteria.len(), self.bulk.len());
        let mut thinking = String::new();
        for (i, bulk) in self.bulk.iter().enumerate() {
            if i == 0 {
                thinking.push_str(&format!("Start case {} with a direct computation. ", self.id));
            } else {
                thinking.push_str(&format!("Alternatively, attempt {i} takes another route. "));
            }
            for s in 0..*bulk {
                thinking.push_str(&format!("Step {s} refines the estimate further. "));
            }
        }
        let answer = format!("<think>{}</think>{}", thinking.trim_end(), self.final_answer);
        let mut scripted = json!({
            "criteria": self.criteria,
            "independence": self.independence,
        });
        if let Some(solver) = &self.solver {
            scripted["solver"] = json!(solver);
        }
        json!({
            "id": self.id,
            "question": self.question,
            "answer": answer,
            "source": "synthetic",
            "scripted": scripted,
        })
    }
}

/// Random but seed-determined trace: every suboptimal non-final
/// subtrajectory gets an independence verdict, so the scripted judge can
/// always answer.
pub fn random_trace(rng: &mut ChaCha8Rng, id: &str) -> TraceSpec {
    let subs = rng.gen_range(1..=6);
    let criteria: Vec<[bool; 5]> = (0..subs)
        .map(|_| std::array::from_fn(|_| rng.gen_bool(0.8)))
        .collect();
    let independence: Vec<Option<bool>> = criteria
        .iter()
        .enumerate()
        .map(|(i, flags)| {
            let suboptimal = flags.iter().any(|&b| !b);
            (suboptimal && i + 1 != subs).then(|| rng.gen_bool(0.5))
        })
        .collect();
    let bulk: Vec<usize> = (0..subs).map(|_| rng.gen_range(1..8)).collect();
    let mut spec = TraceSpec::simple(id, criteria, independence);
    spec.bulk = bulk;
    spec
}

/// Write records as a JSONL corpus file.
pub fn write_corpus(path: &Path, records: &[Value]) {
    let mut writer = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    for record in records {
        writeln!(writer, "{record}").unwrap();
    }
    writer.flush().unwrap();
}

pub struct RunResult {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Run the `subtraj` binary with pinned timestamps for reproducibility.
pub fn subtraj(args: &[&str]) -> RunResult {
    let output = Command::new(env!("CARGO_BIN_EXE_subtraj"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs");
    RunResult {
        code: output.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&output.stdout).to_string(),
        stderr: String::from_utf8_lossy(&output.stderr).to_string(),
    }
}

pub fn subtraj_ok(args: &[&str]) -> RunResult {
    let result = subtraj(args);
    assert_eq!(
        result.code, 0,
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        result.stdout, result.stderr
    );
    result
}

/// Value of `key=` in the given stage's summary line.
pub fn summary_note(stdout: &str, stage: &str, key: &str) -> Option<String> {
    let prefix = format!("{stage}:");
    let needle = format!("{key}=");
    stdout
        .lines()
        .find(|l| l.starts_with(&prefix))?
        .split_whitespace()
        .find_map(|part| part.strip_prefix(&needle).map(str::to_string))
}

/// Parse a JSONL file back into values.
pub fn read_jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

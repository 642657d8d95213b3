//! Versioned prompt templates and deterministic prompt assembly.
//!
//! Templates are plain text with `{placeholder}` slots. The template version
//! is part of every cache key and every `judge_id`, so editing a template
//! invalidates cached verdicts instead of silently reusing them.

use serde::{Deserialize, Serialize};

use crate::scorer::RuleTokenizer;
use crate::scorer::Tokenizer;
use crate::segmenter::Subtrajectory;

const DEFAULT_CRITERIA_TEMPLATE: &str = "\
You are reviewing one segment of a step-by-step solution to a problem.

Problem:
{question}
{preceding}
Segment under review:
{subtrajectory}

Judge the segment against each criterion:
- EFFORT: the segment does not merely name a method; it explains the idea and actually applies it to this problem, connecting it to the work so far.
- EFFECTIVENESS: the segment attacks the problem productively: it simplifies the problem, refines earlier steps, advances the solution, clarifies a method's limits, or substantiates an earlier conclusion.
- COHERENCE: consecutive steps inside the segment follow from one another with no logical leaps; intermediate results are computed or proven rather than asserted.
- PRELIMINARY_CONCLUSION: before moving on, the segment states what it established: an answer, an intermediate finding, an assessment of the current approach, or a concrete suggestion of what to try next.
- VALID_VERIFICATION: the segment does not verify the same statement twice by the same method and does not re-verify statements already verified in earlier segments.

Answer with exactly five lines and nothing else:
EFFORT: YES or NO
EFFECTIVENESS: YES or NO
COHERENCE: YES or NO
PRELIMINARY_CONCLUSION: YES or NO
VALID_VERIFICATION: YES or NO
";

const DEFAULT_INDEPENDENCE_TEMPLATE: &str = "\
A segment of a step-by-step solution is being considered for removal.

Segment:
{subtrajectory}

Everything that comes after it:
{later}

The segment is independent when no parameter, variable, algebraic expression, conclusion, or verification defined in it is used anywhere in the later content shown above.

Answer with exactly one line:
INDEPENDENT: YES or NO
";

const DEFAULT_SOLVE_TEMPLATE: &str = "\
Solve the following problem. Work step by step, then put the final answer in boxed{}.
This is attempt {attempt}.

Problem:
{question}
";

const DEFAULT_GRADE_TEMPLATE: &str = "\
Decide whether the candidate answer agrees with the reference answer to this problem. Ignore formatting differences; judge mathematical equality.

Problem:
{question}

Reference answer:
{reference}

Candidate answer:
{candidate}

Answer with exactly one line:
VERDICT: CORRECT or INCORRECT
";

/// The four prompt templates plus their version tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub criteria: String,
    pub independence: String,
    pub solve: String,
    pub grade: String,
    pub version: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            criteria: DEFAULT_CRITERIA_TEMPLATE.to_string(),
            independence: DEFAULT_INDEPENDENCE_TEMPLATE.to_string(),
            solve: DEFAULT_SOLVE_TEMPLATE.to_string(),
            grade: DEFAULT_GRADE_TEMPLATE.to_string(),
            version: "v1".to_string(),
        }
    }
}

impl PromptTemplates {
    /// Replace one template and re-version from the content hash, so cached
    /// verdicts from other template sets can never be confused with ours.
    pub fn with_criteria(mut self, template: impl Into<String>) -> Self {
        self.criteria = template.into();
        self.reversion();
        self
    }

    pub fn with_independence(mut self, template: impl Into<String>) -> Self {
        self.independence = template.into();
        self.reversion();
        self
    }

    fn reversion(&mut self) {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for part in [&self.criteria, &self.independence, &self.solve, &self.grade] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        self.version = format!("custom-{}", &hex::encode(h.finalize())[..12]);
    }
}

/// An assembled prompt plus what had to be cut to fit the token budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltPrompt {
    pub text: String,
    pub dropped_preceding: usize,
    pub truncated: bool,
}

impl BuiltPrompt {
    /// Prefix a raw backend reply with truncation metadata, when any.
    pub fn annotate(&self, reply: String) -> String {
        if self.dropped_preceding == 0 && !self.truncated {
            reply
        } else {
            format!(
                "[prompt-context dropped_preceding={} truncated={}]\n{}",
                self.dropped_preceding, self.truncated, reply
            )
        }
    }
}

fn prompt_tokens(text: &str) -> usize {
    RuleTokenizer.count(text)
}

fn render_preceding(preceding: &[&str], dropped: usize) -> String {
    if preceding.is_empty() && dropped == 0 {
        return "\n".to_string();
    }
    let mut out = String::from("\nPreceding segments (oldest first):\n");
    if dropped > 0 {
        out.push_str(&format!("[{dropped} earlier segment(s) omitted]\n"));
    }
    for text in preceding {
        out.push_str(text);
        if !text.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// Truncate `text` to the longest char prefix keeping the rendered prompt
/// within `budget` tokens, via `render`. Binary search keeps it deterministic.
fn fit_by_truncation(text: &str, budget: usize, render: &dyn Fn(&str) -> String) -> (String, String) {
    const NOTE: &str = "\n[segment truncated to fit the prompt budget]";
    let chars: Vec<char> = text.chars().collect();
    let (mut lo, mut hi) = (0usize, chars.len());
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        let candidate: String = chars[..mid].iter().collect::<String>() + NOTE;
        if prompt_tokens(&render(&candidate)) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let truncated: String = chars[..lo].iter().collect::<String>() + NOTE;
    let rendered = render(&truncated);
    (truncated, rendered)
}

/// Assemble the criteria prompt: question, up to `window` immediately
/// preceding subtrajectories, and the subtrajectory under review.
///
/// If the result exceeds `max_tokens`, the oldest included preceding
/// subtrajectory is dropped first, repeatedly; only then is the segment
/// itself truncated. Identical inputs produce byte-identical prompts.
pub fn build_criteria_prompt(
    templates: &PromptTemplates,
    question: &str,
    preceding: &[Subtrajectory],
    sub_text: &str,
    window: usize,
    max_tokens: usize,
) -> BuiltPrompt {
    let window_start = preceding.len().saturating_sub(window);
    let mut included: Vec<&str> = preceding[window_start..]
        .iter()
        .map(|s| s.text.as_str())
        .collect();
    let mut dropped = window_start;

    let render = |included: &[&str], dropped: usize, sub_text: &str| {
        templates
            .criteria
            .replace("{question}", question)
            .replace("{preceding}", &render_preceding(included, dropped))
            .replace("{subtrajectory}", sub_text)
    };

    loop {
        let text = render(&included, dropped, sub_text);
        if prompt_tokens(&text) <= max_tokens {
            return BuiltPrompt {
                text,
                dropped_preceding: dropped,
                truncated: false,
            };
        }
        if !included.is_empty() {
            included.remove(0);
            dropped += 1;
            continue;
        }
        let renderer = |candidate: &str| render(&[], dropped, candidate);
        let (_, text) = fit_by_truncation(sub_text, max_tokens, &renderer);
        return BuiltPrompt {
            text,
            dropped_preceding: dropped,
            truncated: true,
        };
    }
}

/// Assemble the independence prompt over the segment and all later content.
///
/// Later content over budget is tail-truncated (reuse of a definition is
/// most likely close after it), with a visible note.
pub fn build_independence_prompt(
    templates: &PromptTemplates,
    sub_text: &str,
    later: &str,
    max_tokens: usize,
) -> BuiltPrompt {
    let render = |later: &str| {
        templates
            .independence
            .replace("{subtrajectory}", sub_text)
            .replace("{later}", later)
    };
    let text = render(later);
    if prompt_tokens(&text) <= max_tokens {
        return BuiltPrompt {
            text,
            dropped_preceding: 0,
            truncated: false,
        };
    }
    let (_, text) = fit_by_truncation(later, max_tokens, &render);
    BuiltPrompt {
        text,
        dropped_preceding: 0,
        truncated: true,
    }
}

/// Assemble a solver prompt. The attempt number is part of the prompt, so
/// each attempt is a distinct generation and a distinct cache entry.
pub fn build_solve_prompt(templates: &PromptTemplates, question: &str, attempt: usize) -> String {
    templates
        .solve
        .replace("{question}", question)
        .replace("{attempt}", &(attempt + 1).to_string())
}

/// Assemble a grading prompt comparing a candidate answer to the reference.
pub fn build_grade_prompt(
    templates: &PromptTemplates,
    question: &str,
    candidate: &str,
    reference: &str,
) -> String {
    templates
        .grade
        .replace("{question}", question)
        .replace("{reference}", reference)
        .replace("{candidate}", candidate)
}

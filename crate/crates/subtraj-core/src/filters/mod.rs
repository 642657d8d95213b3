//! Curation filters: rule-based quality checks, boxed-answer detection,
//! difficulty filtering over solver/grader clients, and n-gram benchmark
//! decontamination.

mod difficulty;
mod ngram;

pub use difficulty::{
    difficulty_filter, ExactMatchGrader, GraderClient, HttpGrader, HttpSolver, ScriptedSolver,
    SolverClient,
};
pub use ngram::{decontaminate, normalize_tokens, ContaminationHit, NGramError, NGramIndex};

use serde::{Deserialize, Serialize};

use crate::corpus::DatasetRecord;
use crate::segmenter::{extract_thinking, Delimiters, ExtractError};

/// Why a record was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ImageDependent,
    Truncated,
    MixedLanguage,
    TooEasy,
    NoBoxedAnswer,
    Contaminated,
    JudgeUnparseable,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::ImageDependent => "image_dependent",
            RejectReason::Truncated => "truncated",
            RejectReason::MixedLanguage => "mixed_language",
            RejectReason::TooEasy => "too_easy",
            RejectReason::NoBoxedAnswer => "no_boxed_answer",
            RejectReason::Contaminated => "contaminated",
            RejectReason::JudgeUnparseable => "judge_unparseable",
        }
    }
}

/// Keep/reject decision with rejection reasons. `keep` implies no reasons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub reasons: Vec<RejectReason>,
}

impl FilterVerdict {
    pub fn keep() -> Self {
        FilterVerdict {
            keep: true,
            reasons: Vec::new(),
        }
    }

    pub fn reject(reasons: Vec<RejectReason>) -> Self {
        debug_assert!(!reasons.is_empty());
        FilterVerdict {
            keep: false,
            reasons,
        }
    }
}

/// Knobs of the rule-based quality filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasicFilterConfig {
    /// Lowercased phrases marking an image-dependent question, matched as
    /// substrings.
    pub image_phrases: Vec<String>,
    /// Letters from outside the dominant script above this fraction flag
    /// mixed language.
    pub mixed_language_threshold: f64,
    pub delimiters: Delimiters,
}

impl Default for BasicFilterConfig {
    fn default() -> Self {
        BasicFilterConfig {
            image_phrases: [
                "as shown in the figure",
                "as shown in the diagram",
                "as shown in the image",
                "shown in the figure",
                "in the figure below",
                "in the diagram below",
                "see the figure",
                "see figure",
                "see the diagram",
                "the picture below",
                "attached image",
                "following figure",
                "following diagram",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            mixed_language_threshold: 0.05,
            delimiters: Delimiters::default(),
        }
    }
}

/// Rule-based quality filter: image-dependent questions, truncated thinking
/// blocks, mixed-language records.
pub struct BasicFilter {
    config: BasicFilterConfig,
    image_url: regex::Regex,
    image_markup: regex::Regex,
    structural_markup: regex::Regex,
}

impl BasicFilter {
    pub fn new(config: BasicFilterConfig) -> Self {
        // Images referenced by URL or by markup (HTML, Markdown, LaTeX).
        let image_url =
            regex::Regex::new(r"(?i)https?://\S+\.(png|jpe?g|gif|bmp|svg|webp)\b").unwrap();
        let image_markup =
            regex::Regex::new(r"(?i)(<img\b|!\[[^\]]*\]\(|\\includegraphics)").unwrap();
        // Trace-format and math markup is not language: thinking delimiters,
        // LaTeX control sequences, the boxed-answer marker.
        let structural_markup = regex::Regex::new(&format!(
            r"{}|{}|\\[a-zA-Z]+|(?i)boxed\{{",
            regex::escape(&config.delimiters.open),
            regex::escape(&config.delimiters.close)
        ))
        .unwrap();
        BasicFilter {
            config,
            image_url,
            image_markup,
            structural_markup,
        }
    }

    pub fn check(&self, record: &DatasetRecord) -> FilterVerdict {
        let mut reasons = Vec::new();
        if self.is_image_dependent(&record.question) {
            reasons.push(RejectReason::ImageDependent);
        }
        if matches!(
            extract_thinking(&record.answer, &self.config.delimiters),
            Err(ExtractError::Truncated { .. })
        ) {
            reasons.push(RejectReason::Truncated);
        }
        let combined = format!("{} {}", record.question, record.answer);
        let stripped = self.structural_markup.replace_all(&combined, " ");
        if mixed_language_ratio(&stripped) > self.config.mixed_language_threshold {
            reasons.push(RejectReason::MixedLanguage);
        }
        if reasons.is_empty() {
            FilterVerdict::keep()
        } else {
            FilterVerdict::reject(reasons)
        }
    }

    fn is_image_dependent(&self, question: &str) -> bool {
        let lowered = question.to_lowercase();
        self.config
            .image_phrases
            .iter()
            .any(|p| lowered.contains(p.as_str()))
            || self.image_url.is_match(question)
            || self.image_markup.is_match(question)
    }
}

impl Default for BasicFilter {
    fn default() -> Self {
        BasicFilter::new(BasicFilterConfig::default())
    }
}

/// Rule-based quality filter with the given configuration.
pub fn basic_quality_filter(record: &DatasetRecord, filter: &BasicFilter) -> FilterVerdict {
    filter.check(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum ScriptClass {
    Latin,
    Cyrillic,
    Han,
    Hiragana,
    Katakana,
    Hangul,
    Arabic,
    Hebrew,
    Devanagari,
    Thai,
    Other,
}

/// Script class of a letter, or `None` for characters that do not count:
/// non-letters, and Greek letters, which permeate mathematical notation.
fn script_class(c: char) -> Option<ScriptClass> {
    if !c.is_alphabetic() {
        return None;
    }
    let u = c as u32;
    Some(match u {
        0x0041..=0x024F | 0x1E00..=0x1EFF => ScriptClass::Latin,
        0x0370..=0x03FF | 0x1F00..=0x1FFF => return None, // Greek: math alphabet
        0x0400..=0x052F => ScriptClass::Cyrillic,
        0x0590..=0x05FF => ScriptClass::Hebrew,
        0x0600..=0x077F => ScriptClass::Arabic,
        0x0900..=0x097F => ScriptClass::Devanagari,
        0x0E00..=0x0E7F => ScriptClass::Thai,
        0x1100..=0x11FF | 0x3130..=0x318F | 0xAC00..=0xD7AF => ScriptClass::Hangul,
        0x3040..=0x309F => ScriptClass::Hiragana,
        0x30A0..=0x30FF | 0x31F0..=0x31FF => ScriptClass::Katakana,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF => ScriptClass::Han,
        _ => ScriptClass::Other,
    })
}

fn ideographic(class: ScriptClass) -> bool {
    matches!(
        class,
        ScriptClass::Han | ScriptClass::Hiragana | ScriptClass::Katakana | ScriptClass::Hangul
    )
}

/// Fraction of counted letters outside the dominant script.
///
/// Alphabetic scripts only count runs of two or more letters — a lone `x`
/// or `n` is a formula variable, not language. Ideographic scripts count
/// single characters, since one character is a word there.
fn mixed_language_ratio(text: &str) -> f64 {
    let mut counts: std::collections::HashMap<ScriptClass, usize> = std::collections::HashMap::new();
    let mut run_class: Option<ScriptClass> = None;
    let mut run_len = 0usize;
    let flush = |class: Option<ScriptClass>, len: usize, counts: &mut std::collections::HashMap<ScriptClass, usize>| {
        if let Some(c) = class {
            if len >= 2 || ideographic(c) {
                *counts.entry(c).or_insert(0) += len;
            }
        }
    };
    for ch in text.chars() {
        let class = script_class(ch);
        if class == run_class && class.is_some() {
            run_len += 1;
        } else {
            flush(run_class, run_len, &mut counts);
            run_class = class;
            run_len = usize::from(class.is_some());
        }
    }
    flush(run_class, run_len, &mut counts);

    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    let dominant = counts.values().max().copied().unwrap_or(0);
    (total - dominant) as f64 / total as f64
}

/// Whether a well-formed `boxed{...}` span with balanced braces exists.
pub fn has_boxed_answer(solution_text: &str) -> bool {
    extract_boxed_answer(solution_text).is_some()
}

/// Content of the last well-formed `boxed{...}` span, braces balanced.
/// The last span is the one holding the final answer by convention.
pub fn extract_boxed_answer(solution_text: &str) -> Option<String> {
    const NEEDLE: &str = "boxed{";
    let mut result = None;
    let mut search_from = 0usize;
    while let Some(rel) = solution_text[search_from..].find(NEEDLE) {
        let content_start = search_from + rel + NEEDLE.len();
        let mut depth = 1i32;
        let mut end = None;
        for (off, ch) in solution_text[content_start..].char_indices() {
            match ch {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(content_start + off);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(end) => {
                result = Some(solution_text[content_start..end].to_string());
                search_from = end + 1;
            }
            None => break, // unbalanced: no further well-formed span possible
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(question: &str, answer: &str) -> DatasetRecord {
        DatasetRecord::new("r1", question, answer)
    }

    #[test]
    fn image_dependent_questions_are_rejected() {
        let filter = BasicFilter::default();
        let clean_answer = "<think>Compute 2+2=4 step by step.</think>The answer is boxed{4}.";
        for q in [
            "As shown in the figure, find the angle ABC.",
            "Compute the shaded area, see figure 3.",
            "Refer to https://example.com/fig1.png and find x.",
            "Given <img src=\"x.png\"> what is the perimeter?",
            "Look at ![diagram](d.jpg) and compute.",
            "In the triangle \\includegraphics{fig} find x.",
        ] {
            let v = filter.check(&record(q, clean_answer));
            assert!(!v.keep, "{q}");
            assert!(v.reasons.contains(&RejectReason::ImageDependent), "{q}");
        }
    }

    #[test]
    fn truncated_thinking_is_rejected() {
        let filter = BasicFilter::default();
        let v = filter.check(&record(
            "Find x.",
            "<think>Long reasoning that never finishe",
        ));
        assert!(!v.keep);
        assert_eq!(v.reasons, [RejectReason::Truncated]);
    }

    #[test]
    fn clean_english_record_is_kept() {
        let filter = BasicFilter::default();
        let v = filter.check(&record(
            "Find the smallest prime greater than 10.",
            "<think>Check 11: prime. Done.</think>The answer is boxed{11}.",
        ));
        assert!(v.keep);
        assert!(v.reasons.is_empty());
    }

    #[test]
    fn mixed_language_is_rejected_math_symbols_are_not() {
        let filter = BasicFilter::default();
        // English question with a substantial Chinese passage in the answer.
        let mixed = record(
            "Find the value of the sum.",
            "<think>First expand the series. 我们把级数展开然后逐项比较大小, 这样就能得到答案。</think>boxed{3}",
        );
        let v = filter.check(&mixed);
        assert!(!v.keep);
        assert!(v.reasons.contains(&RejectReason::MixedLanguage));

        // Greek letters and single-letter variables are not language mixing.
        let mathy = record(
            "Compute the limit as x approaches 0 of sin(αx)/x given α = 2π.",
            "<think>Use the standard limit with α fixed; n and k stay integers.</think>boxed{2π}",
        );
        assert!(filter.check(&mathy).keep);

        // A fully Chinese record is internally consistent: kept. Thinking
        // delimiters, LaTeX commands and the boxed marker are structure, not
        // language.
        let chinese = record(
            "求大于 10 的最小质数。",
            "<think>检查 11: 是质数,因为 \\frac{11}{k} 对所有 k 都不是整数。</think>答案是 boxed{11}。",
        );
        let v = filter.check(&chinese);
        assert!(v.keep, "{:?}", v.reasons);
    }

    #[test]
    fn pure_filters_commute() {
        // basic, boxed, and decontamination are pure predicates: the kept
        // set cannot depend on application order.
        let bench = vec![(
            "b1".to_string(),
            (0..20).map(|i| format!("tok{i}")).collect::<Vec<_>>().join(" "),
        )];
        let index = ngram::NGramIndex::build(&bench, 15).unwrap();
        let filter = BasicFilter::default();
        let records = vec![
            record("clean question about primes", "<think>ok.</think>boxed{2}"),
            record("as shown in the figure, solve", "<think>ok.</think>boxed{2}"),
            record("needs no picture", "<think>cut off mid thou"),
            record(
                &(0..20).map(|i| format!("tok{i}")).collect::<Vec<_>>().join(" "),
                "<think>ok.</think>boxed{2}",
            ),
            record("fine but unboxed", "<think>ok.</think>the answer is two"),
        ];
        let apply = |record: &DatasetRecord, order: [u8; 3]| -> bool {
            order.iter().all(|step| match step {
                0 => filter.check(record).keep,
                1 => has_boxed_answer(&record.answer),
                _ => ngram::decontaminate(record, &index).0.keep,
            })
        };
        for record in &records {
            let forward = apply(record, [0, 1, 2]);
            let backward = apply(record, [2, 1, 0]);
            let shuffled = apply(record, [1, 2, 0]);
            assert_eq!(forward, backward);
            assert_eq!(forward, shuffled);
        }
        // And the fixture exercises every verdict at least once.
        let keeps: Vec<bool> = records.iter().map(|r| apply(r, [0, 1, 2])).collect();
        assert_eq!(keeps, [true, false, false, false, false]);
    }

    #[test]
    fn boxed_answer_detection() {
        assert!(has_boxed_answer("... the answer is boxed{42}."));
        assert!(has_boxed_answer("so \\boxed{x+1} wraps up"));
        assert!(!has_boxed_answer("no marker here"));
        assert!(!has_boxed_answer("boxed{unbalanced"));
        assert_eq!(extract_boxed_answer("boxed{1+{2}}"), Some("1+{2}".into()));
        assert_eq!(
            extract_boxed_answer("first boxed{1} then boxed{2}"),
            Some("2".into())
        );
        assert_eq!(extract_boxed_answer("boxed{}"), Some(String::new()));
        assert_eq!(extract_boxed_answer(""), None);
    }
}

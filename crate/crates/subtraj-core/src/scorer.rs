//! Subtrajectory and thinking-process quality scores.
//!
//! Each retained subtrajectory earns 1/5 point per satisfied criterion. The
//! thinking-process quality score aggregates those scores either weighted by
//! token counts (a long weak subtrajectory drags the score down more than a
//! short one) or with equal weights.
//!
//! Only ratios of token counts enter the weighted score, so any consistent
//! tokenizer preserves its meaning; a deterministic rule tokenizer is the
//! default and an external-vocabulary tokenizer can be plugged in.
//!
//! Aggregation is computed from integer sums — `Σ tokens_i·satisfied_i` over
//! `5·Σ tokens_i` — with a single final division, so equal inputs produce
//! bit-equal scores and ties sort stably.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::CriterionVerdicts;
use crate::reviser::RevisedThinking;
use crate::segmenter::Subtrajectory;

/// Deterministic token counting. Identical text must give identical counts.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn version(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

/// Rule tokenizer: split on whitespace, then split each chunk into maximal
/// alphanumeric runs and single punctuation characters (each punctuation
/// character is one token). `"x=1,"` counts as `x`, `=`, `1`, `,` — four.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTokenizer;

impl Tokenizer for RuleTokenizer {
    fn name(&self) -> &str {
        "rule"
    }

    fn version(&self) -> &str {
        "1"
    }

    fn count(&self, text: &str) -> usize {
        let mut count = 0usize;
        let mut in_run = false;
        for ch in text.chars() {
            if ch.is_whitespace() {
                in_run = false;
            } else if ch.is_alphanumeric() {
                if !in_run {
                    count += 1;
                    in_run = true;
                }
            } else {
                count += 1;
                in_run = false;
            }
        }
        count
    }
}

/// Tokens under the rule tokenizer, for consumers that need the sequence
/// (n-gram indexing) rather than the count.
pub fn rule_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut run = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !run.is_empty() {
                tokens.push(std::mem::take(&mut run));
            }
        } else if ch.is_alphanumeric() {
            run.push(ch);
        } else {
            if !run.is_empty() {
                tokens.push(std::mem::take(&mut run));
            }
            tokens.push(ch.to_string());
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    tokens
}

/// Greedy longest-match tokenizer over an external vocabulary file (one
/// token per line). Characters not covered by the vocabulary count as one
/// token each.
pub struct VocabTokenizer {
    vocab: HashSet<String>,
    max_token_chars: usize,
    version: String,
}

impl VocabTokenizer {
    pub fn from_file(path: &Path) -> Result<Self, ScoreError> {
        let data = std::fs::read_to_string(path).map_err(|source| ScoreError::VocabLoad {
            path: path.to_path_buf(),
            source,
        })?;
        let vocab: HashSet<String> = data
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        if vocab.is_empty() {
            return Err(ScoreError::EmptyVocab {
                path: path.to_path_buf(),
            });
        }
        let max_token_chars = vocab.iter().map(|t| t.chars().count()).max().unwrap_or(1);
        use sha2::{Digest, Sha256};
        let version = format!("{:.12}", hex::encode(Sha256::digest(data.as_bytes())));
        Ok(VocabTokenizer {
            vocab,
            max_token_chars,
            version,
        })
    }
}

impl Tokenizer for VocabTokenizer {
    fn name(&self) -> &str {
        "vocab"
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn count(&self, text: &str) -> usize {
        let chars: Vec<char> = text.chars().collect();
        let mut count = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            if chars[i].is_whitespace() {
                i += 1;
                continue;
            }
            let mut matched = 0usize;
            let upper = (i + self.max_token_chars).min(chars.len());
            let mut candidate = String::new();
            for (len, ch) in chars[i..upper].iter().enumerate() {
                candidate.push(*ch);
                if self.vocab.contains(&candidate) {
                    matched = len + 1;
                }
            }
            count += 1;
            i += matched.max(1);
        }
        count
    }
}

/// Count tokens under the given tokenizer. Empty text counts zero.
pub fn count_tokens(text: &str, tokenizer: &dyn Tokenizer) -> usize {
    tokenizer.count(text)
}

/// Fraction of the five criteria a subtrajectory satisfies, in
/// {0, 1/5, 2/5, 3/5, 4/5, 1}.
pub fn score_subtrajectory(verdicts: &CriterionVerdicts) -> f64 {
    f64::from(verdicts.satisfied_count()) / 5.0
}

/// How per-subtrajectory scores aggregate into the quality score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    TokenWeighted,
    Equal,
}

/// One retained subtrajectory's score and token count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtrajectoryScore {
    pub index: usize,
    /// Satisfied-criteria count: the exact numerator of `score` over 5.
    pub satisfied: u8,
    pub score: f64,
    pub token_count: usize,
}

/// Quality score of a revised thinking process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredThinking {
    pub quality_score: f64,
    pub weighting: Weighting,
    /// Retained subtrajectory count.
    pub n: usize,
    /// Sum of retained subtrajectory token counts.
    pub total_tokens: usize,
    pub per_subtrajectory: Vec<SubtrajectoryScore>,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no retained subtrajectories to score")]
    EmptyRetained,
    #[error("token-weighted scoring is degenerate: retained subtrajectories have zero tokens")]
    ZeroTotalTokens,
    #[error("no verdicts for subtrajectory {0}")]
    MissingVerdict(usize),
    #[error("retained index {0} has no subtrajectory")]
    MissingSubtrajectory(usize),
    #[error("cannot load tokenizer vocabulary {path}: {source}")]
    VocabLoad {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("tokenizer vocabulary {path} is empty")]
    EmptyVocab { path: std::path::PathBuf },
}

/// Aggregate explicit `(token_count, score)` pairs into a quality score.
///
/// Token-weighted: `Σ (tokens_i / total_tokens) · score_i`. Equal:
/// `(1/n) Σ score_i`. This is the aggregation kernel as written; the
/// verdict-based [`quality_score`] computes the same quantity from integer
/// sums for bit-stable ties.
pub fn aggregate_scores(pairs: &[(usize, f64)], weighting: Weighting) -> Result<f64, ScoreError> {
    if pairs.is_empty() {
        return Err(ScoreError::EmptyRetained);
    }
    match weighting {
        Weighting::TokenWeighted => {
            let total: f64 = pairs.iter().map(|(t, _)| *t as f64).sum();
            if total == 0.0 {
                return Err(ScoreError::ZeroTotalTokens);
            }
            Ok(pairs.iter().map(|(t, s)| (*t as f64 / total) * s).sum())
        }
        Weighting::Equal => {
            Ok(pairs.iter().map(|(_, s)| s).sum::<f64>() / pairs.len() as f64)
        }
    }
}

/// Score a revised thinking process. Only retained subtrajectories
/// contribute; the thinking-process token count is the sum of retained
/// subtrajectory token counts, so token weights sum to exactly one.
pub fn quality_score(
    revised: &RevisedThinking,
    subs: &[Subtrajectory],
    tokenizer: &dyn Tokenizer,
    weighting: Weighting,
) -> Result<ScoredThinking, ScoreError> {
    if revised.retained.is_empty() {
        return Err(ScoreError::EmptyRetained);
    }
    let mut per = Vec::with_capacity(revised.retained.len());
    for &index in &revised.retained {
        let sub = subs
            .iter()
            .find(|s| s.index == index)
            .ok_or(ScoreError::MissingSubtrajectory(index))?;
        let assessment = revised
            .per_subtrajectory
            .get(&index)
            .ok_or(ScoreError::MissingVerdict(index))?;
        let satisfied = assessment.verdicts.satisfied_count();
        per.push(SubtrajectoryScore {
            index,
            satisfied,
            score: f64::from(satisfied) / 5.0,
            token_count: tokenizer.count(&sub.text),
        });
    }
    let n = per.len();
    let total_tokens: usize = per.iter().map(|s| s.token_count).sum();
    let quality = match weighting {
        Weighting::TokenWeighted => {
            if total_tokens == 0 {
                return Err(ScoreError::ZeroTotalTokens);
            }
            let numerator: u128 = per
                .iter()
                .map(|s| s.token_count as u128 * u128::from(s.satisfied))
                .sum();
            numerator as f64 / (5.0 * total_tokens as f64)
        }
        Weighting::Equal => {
            let numerator: u128 = per.iter().map(|s| u128::from(s.satisfied)).sum();
            numerator as f64 / (5.0 * n as f64)
        }
    };
    Ok(ScoredThinking {
        quality_score: quality,
        weighting,
        n,
        total_tokens,
        per_subtrajectory: per,
    })
}

//! Exact n-gram benchmark decontamination.
//!
//! A record is contaminated when its normalized question shares any
//! contiguous run of `n` tokens (default 15) with a benchmark question.
//! Normalization: rule tokenization, lowercasing, and dropping
//! punctuation-only tokens. Matching is exact — the index maps full window
//! strings to benchmark item ids, so equal hashes are always confirmed by
//! sequence comparison and there are no false positives or negatives.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FilterVerdict, RejectReason};
use crate::corpus::DatasetRecord;
use crate::scorer::rule_tokens;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NGramError {
    #[error("n-gram size must be at least 1")]
    ZeroN,
}

/// Normalized token sequence of a text: rule tokens, lowercased, with
/// punctuation-only tokens stripped.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    rule_tokens(text)
        .into_iter()
        .map(|t| t.to_lowercase())
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect()
}

// Join separator for window keys; cannot survive normalization inside a token.
const SEP: char = '\u{1f}';

fn window_key(window: &[String]) -> String {
    let mut key = String::new();
    for (i, token) in window.iter().enumerate() {
        if i > 0 {
            key.push(SEP);
        }
        key.push_str(token);
    }
    key
}

/// Index of every n-token window of a benchmark set.
#[derive(Debug, Clone)]
pub struct NGramIndex {
    n: usize,
    windows: HashMap<String, Vec<u32>>,
    item_ids: Vec<String>,
    /// Benchmark items too short to contribute any window.
    pub skipped_short: usize,
}

impl NGramIndex {
    /// Index all contiguous `n`-token windows of each benchmark question.
    /// Items shorter than `n` tokens contribute nothing and are counted in
    /// `skipped_short`.
    pub fn build(items: &[(String, String)], n: usize) -> Result<Self, NGramError> {
        if n == 0 {
            return Err(NGramError::ZeroN);
        }
        let mut windows: HashMap<String, Vec<u32>> = HashMap::new();
        let mut item_ids = Vec::with_capacity(items.len());
        let mut skipped_short = 0usize;
        for (ordinal, (id, question)) in items.iter().enumerate() {
            item_ids.push(id.clone());
            let tokens = normalize_tokens(question);
            if tokens.len() < n {
                skipped_short += 1;
                continue;
            }
            for window in tokens.windows(n) {
                let entry = windows.entry(window_key(window)).or_default();
                if entry.last() != Some(&(ordinal as u32)) {
                    entry.push(ordinal as u32);
                }
            }
        }
        Ok(NGramIndex {
            n,
            windows,
            item_ids,
            skipped_short,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of distinct indexed windows.
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    /// All window hits of `text` against the index.
    pub fn matches(&self, text: &str) -> Vec<ContaminationHit> {
        let tokens = normalize_tokens(text);
        if tokens.len() < self.n {
            return Vec::new();
        }
        let mut hits = Vec::new();
        for (start, window) in tokens.windows(self.n).enumerate() {
            if let Some(ordinals) = self.windows.get(&window_key(window)) {
                hits.push(ContaminationHit {
                    token_start: start,
                    window: window.join(" "),
                    benchmark_ids: ordinals
                        .iter()
                        .map(|&o| self.item_ids[o as usize].clone())
                        .collect(),
                });
            }
        }
        hits
    }
}

/// One shared window between a record and the benchmark set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContaminationHit {
    /// Window start, as an offset into the record's normalized token
    /// sequence.
    pub token_start: usize,
    pub window: String,
    pub benchmark_ids: Vec<String>,
}

/// Reject a record iff any n-token window of its normalized question is in
/// the index. The hits name the matching benchmark items as evidence.
pub fn decontaminate(record: &DatasetRecord, index: &NGramIndex) -> (FilterVerdict, Vec<ContaminationHit>) {
    let hits = index.matches(&record.question);
    if hits.is_empty() {
        (FilterVerdict::keep(), hits)
    } else {
        (FilterVerdict::reject(vec![RejectReason::Contaminated]), hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize, prefix: &str) -> String {
        (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn window_counts_by_length() {
        let exact = vec![("b1".to_string(), words(15, "w"))];
        let idx = NGramIndex::build(&exact, 15).unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.skipped_short, 0);

        let longer = vec![("b1".to_string(), words(17, "w"))];
        let idx = NGramIndex::build(&longer, 15).unwrap();
        assert_eq!(idx.len(), 3); // 17 - 15 + 1

        let short = vec![("b1".to_string(), words(14, "w"))];
        let idx = NGramIndex::build(&short, 15).unwrap();
        assert_eq!(idx.len(), 0);
        assert_eq!(idx.skipped_short, 1);

        assert_eq!(NGramIndex::build(&exact, 0).unwrap_err(), NGramError::ZeroN);
    }

    #[test]
    fn verbatim_15_token_overlap_is_flagged_14_is_not() {
        let bench = vec![(
            "aime-3".to_string(),
            "Let n be the smallest positive integer such that n squared plus one is divisible by seven distinct primes".to_string(),
        )];
        let idx = NGramIndex::build(&bench, 15).unwrap();

        // Record sharing the first 15 normalized tokens verbatim.
        let hit = DatasetRecord::new(
            "r1",
            "Let n be the smallest positive integer such that n squared plus one is divisible by five primes instead",
            "a",
        );
        let (verdict, hits) = decontaminate(&hit, &idx);
        assert!(!verdict.keep);
        assert_eq!(verdict.reasons, [RejectReason::Contaminated]);
        assert_eq!(hits[0].benchmark_ids, ["aime-3"]);

        // Only 14 shared tokens: the 15th diverges.
        let near = DatasetRecord::new(
            "r2",
            "Let n be the smallest positive integer such that n squared plus one is NOT anything else at all here",
            "a",
        );
        let (verdict, hits) = decontaminate(&near, &idx);
        assert!(verdict.keep, "14-token overlap must not flag: {hits:?}");
    }

    #[test]
    fn normalization_ignores_case_whitespace_and_punctuation() {
        let bench = vec![("b".to_string(), words(15, "tok"))];
        let idx = NGramIndex::build(&bench, 15).unwrap();
        let noisy = words(15, "tok")
            .to_uppercase()
            .replace("TOK7", "  ,  TOK7 !! ");
        let record = DatasetRecord::new("r", &noisy, "a");
        let (verdict, _) = decontaminate(&record, &idx);
        assert!(!verdict.keep);
    }

    #[test]
    fn empty_question_is_kept() {
        let bench = vec![("b".to_string(), words(15, "w"))];
        let idx = NGramIndex::build(&bench, 15).unwrap();
        let record = DatasetRecord::new("r", "short one", "a");
        let (verdict, hits) = decontaminate(&record, &idx);
        assert!(verdict.keep);
        assert!(hits.is_empty());
    }

    #[test]
    fn matches_agree_with_quadratic_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let vocab: Vec<String> = (0..30).map(|i| format!("word{i}")).collect();
        let sentence = |rng: &mut rand_chacha::ChaCha8Rng, len: usize| -> String {
            (0..len)
                .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let n = 5; // small n makes chance overlaps actually occur
        let bench: Vec<(String, String)> = (0..20)
            .map(|i| (format!("b{i}"), sentence(&mut rng, 12)))
            .collect();
        let idx = NGramIndex::build(&bench, n).unwrap();

        let bench_tokens: Vec<Vec<String>> =
            bench.iter().map(|(_, q)| normalize_tokens(q)).collect();
        for _ in 0..200 {
            let len = rng.gen_range(3..20);
            let q = sentence(&mut rng, len);
            let q_tokens = normalize_tokens(&q);
            let brute = bench_tokens.iter().any(|bt| {
                bt.len() >= n
                    && q_tokens.len() >= n
                    && q_tokens
                        .windows(n)
                        .any(|w| bt.windows(n).any(|bw| bw == w))
            });
            let fast = !idx.matches(&q).is_empty();
            assert_eq!(fast, brute, "disagreement on {q:?}");
        }
    }
}

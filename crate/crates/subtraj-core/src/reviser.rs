//! Classification and elimination of suboptimal subtrajectories.
//!
//! A subtrajectory failing any of the five criteria is suboptimal. A
//! suboptimal subtrajectory is eliminated only when it is independent of
//! everything after it — otherwise removing it would break the reasoning
//! flow (a formula it defines may be reused two attempts later).
//!
//! Elimination is a single pass: every independence question is asked
//! against the original text, then all eliminations apply jointly. The final
//! subtrajectory is exempt — it carries the conclusion that feeds the final
//! answer — so at least one subtrajectory always remains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{CriterionVerdicts, IndependenceVerdict};
use crate::segmenter::Subtrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Optimal,
    Suboptimal,
}

/// Suboptimal iff at least one of the five criteria is unmet.
pub fn classify(verdicts: &CriterionVerdicts) -> Classification {
    if verdicts.flags().iter().all(|&b| b) {
        Classification::Optimal
    } else {
        Classification::Suboptimal
    }
}

/// Everything decided about one subtrajectory during revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubAssessment {
    pub verdicts: CriterionVerdicts,
    pub classification: Classification,
    /// Present only where independence was actually consulted: suboptimal
    /// and not final.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub independence: Option<IndependenceVerdict>,
}

/// The outcome of revising one thinking process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisedThinking {
    /// Kept subtrajectory indices, in original order; never empty.
    pub retained: Vec<usize>,
    /// Removed subtrajectory indices, in original order.
    pub eliminated: Vec<usize>,
    /// In-order concatenation of retained subtrajectory texts.
    pub revised_text: String,
    pub per_subtrajectory: BTreeMap<usize, SubAssessment>,
}

#[derive(Debug, Error)]
pub enum ReviseError<E> {
    #[error("nothing to revise: no subtrajectories")]
    Empty,
    #[error("expected {expected} verdicts, got {got}")]
    VerdictCount { expected: usize, got: usize },
    #[error("independence provider failed on subtrajectory {index}")]
    Provider {
        index: usize,
        #[source]
        source: E,
    },
}

/// Apply the elimination rule to a segmented thinking process.
///
/// For each suboptimal subtrajectory except the final one, the independence
/// provider is consulted against the original subsequent content — all later
/// subtrajectories plus the final answer. It is eliminated iff independent.
/// A provider failure aborts the whole revision; no partial result is
/// produced.
pub fn revise<E>(
    subs: &[Subtrajectory],
    final_answer: &str,
    verdicts: &[CriterionVerdicts],
    mut independence_provider: impl FnMut(&Subtrajectory, &str) -> Result<IndependenceVerdict, E>,
) -> Result<RevisedThinking, ReviseError<E>> {
    if subs.is_empty() {
        return Err(ReviseError::Empty);
    }
    if verdicts.len() != subs.len() {
        return Err(ReviseError::VerdictCount {
            expected: subs.len(),
            got: verdicts.len(),
        });
    }
    let last = subs.len() - 1;
    let mut per_subtrajectory = BTreeMap::new();
    let mut retained = Vec::with_capacity(subs.len());
    let mut eliminated = Vec::new();

    for (i, sub) in subs.iter().enumerate() {
        let classification = classify(&verdicts[i]);
        let mut independence = None;
        let mut eliminate = false;
        if classification == Classification::Suboptimal && i != last {
            let mut subsequent = String::new();
            for later in &subs[i + 1..] {
                subsequent.push_str(&later.text);
            }
            subsequent.push_str(final_answer);
            let verdict = independence_provider(sub, &subsequent)
                .map_err(|source| ReviseError::Provider { index: i, source })?;
            eliminate = verdict.independent;
            independence = Some(verdict);
        }
        if eliminate {
            eliminated.push(i);
        } else {
            retained.push(i);
        }
        per_subtrajectory.insert(
            i,
            SubAssessment {
                verdicts: verdicts[i].clone(),
                classification,
                independence,
            },
        );
    }

    let revised_text = retained.iter().map(|&i| subs[i].text.as_str()).collect();
    Ok(RevisedThinking {
        retained,
        eliminated,
        revised_text,
        per_subtrajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn verdicts(flags: [bool; 5]) -> CriterionVerdicts {
        CriterionVerdicts::from_flags(flags, "test")
    }

    fn subs_from(texts: &[&str]) -> Vec<Subtrajectory> {
        let mut char_pos = 0;
        texts
            .iter()
            .enumerate()
            .map(|(index, text)| {
                let len = text.chars().count();
                let s = Subtrajectory {
                    index,
                    text: text.to_string(),
                    marker: if index == 0 { "preamble" } else { "Alternatively" }.into(),
                    char_span: (char_pos, char_pos + len),
                };
                char_pos += len;
                s
            })
            .collect()
    }

    fn always(independent: bool) -> impl FnMut(&Subtrajectory, &str) -> Result<IndependenceVerdict, Infallible>
    {
        move |_, _| {
            Ok(IndependenceVerdict {
                independent,
                judge_id: "test".into(),
                raw_output: None,
            })
        }
    }

    #[test]
    fn classify_by_definition() {
        assert_eq!(classify(&verdicts([true; 5])), Classification::Optimal);
        assert_eq!(
            classify(&verdicts([true, true, true, true, false])),
            Classification::Suboptimal
        );
        assert_eq!(classify(&verdicts([false; 5])), Classification::Suboptimal);
    }

    #[test]
    fn all_optimal_is_identity() {
        let subs = subs_from(&["First attempt. ", "Alternatively, second. ", "Final check."]);
        let v = vec![verdicts([true; 5]); 3];
        let mut calls = 0;
        let out = revise(&subs, "the answer is 4.", &v, |s, ctx| {
            calls += 1;
            always(true)(s, ctx)
        })
        .unwrap();
        assert_eq!(out.retained, [0, 1, 2]);
        assert!(out.eliminated.is_empty());
        assert_eq!(
            out.revised_text,
            "First attempt. Alternatively, second. Final check."
        );
        assert_eq!(calls, 0, "independence must not be consulted for optimal subs");
    }

    #[test]
    fn dependent_suboptimal_subtrajectory_is_retained() {
        // Segment 0 defines an area formula but never applies it (fails
        // Effort); segment 2 reuses that formula, so 0 is dependent and must
        // stay despite being suboptimal.
        let subs = subs_from(&[
            "Write the area as half the product of the diagonals; maybe that helps. ",
            "Alternatively, try coordinates for the vertices directly. ",
            "Alternatively, go back to the half-diagonal-product area: plugging d1=6, d2=8 gives 24.",
        ]);
        let v = vec![
            verdicts([false, true, true, true, true]),
            verdicts([true; 5]),
            verdicts([true; 5]),
        ];
        let out = revise(&subs, "boxed{24}", &v, always(false)).unwrap();
        assert_eq!(out.retained, [0, 1, 2]);
        assert!(out.eliminated.is_empty());
    }

    #[test]
    fn independent_suboptimal_subtrajectory_is_eliminated() {
        let subs = subs_from(&[
            "Set up the equation x + y = 10. ",
            "Alternatively, guess small numbers without checking anything. ",
            "Alternatively, substitute y = 10 - x into the product. ",
            "So the maximum is at x = 5; answer 25.",
        ]);
        let v = vec![
            verdicts([true; 5]),
            verdicts([true, false, true, true, true]),
            verdicts([true; 5]),
            verdicts([true; 5]),
        ];
        let mut asked = Vec::new();
        let out = revise(&subs, "boxed{25}", &v, |s, subsequent| {
            asked.push((s.index, subsequent.to_string()));
            always(true)(s, subsequent)
        })
        .unwrap();
        assert_eq!(out.eliminated, [1]);
        assert_eq!(out.retained, [0, 2, 3]);
        // The eliminated slice is removed exactly, nothing else.
        assert_eq!(
            out.revised_text,
            "Set up the equation x + y = 10. Alternatively, substitute y = 10 - x into the product. So the maximum is at x = 5; answer 25."
        );
        // Independence was asked once, against all later content plus the
        // final answer.
        assert_eq!(asked.len(), 1);
        assert_eq!(asked[0].0, 1);
        assert!(asked[0].1.ends_with("boxed{25}"));
        assert!(asked[0].1.contains("substitute y = 10 - x"));
    }

    #[test]
    fn final_subtrajectory_is_exempt_even_if_suboptimal() {
        let subs = subs_from(&["Start. ", "Alternatively, hmm."]);
        let v = vec![verdicts([true; 5]), verdicts([false; 5])];
        let mut calls = 0;
        let out = revise(&subs, "", &v, |s, ctx| {
            calls += 1;
            always(true)(s, ctx)
        })
        .unwrap();
        assert_eq!(out.retained, [0, 1]);
        assert_eq!(calls, 0, "final subtrajectory never triggers independence");
    }

    #[test]
    fn single_suboptimal_subtrajectory_is_always_retained() {
        let subs = subs_from(&["only attempt, no conclusion"]);
        let v = vec![verdicts([false; 5])];
        let out = revise(&subs, "answer", &v, always(true)).unwrap();
        assert_eq!(out.retained, [0]);
        assert!(out.eliminated.is_empty());
    }

    #[test]
    fn provider_failure_aborts_without_partial_result() {
        let subs = subs_from(&["a. ", "Alternatively b. ", "c."]);
        let v = vec![
            verdicts([false; 5]),
            verdicts([false; 5]),
            verdicts([true; 5]),
        ];
        let mut n = 0;
        let res = revise(&subs, "", &v, |_, _| {
            n += 1;
            if n == 2 {
                Err("backend down")
            } else {
                Ok(IndependenceVerdict {
                    independent: true,
                    judge_id: "t".into(),
                    raw_output: None,
                })
            }
        });
        match res {
            Err(ReviseError::Provider { index: 1, source }) => assert_eq!(source, "backend down"),
            other => panic!("expected provider error, got {other:?}"),
        }
    }

    #[test]
    fn elimination_soundness_and_never_empty() {
        // Randomized: eliminated ⇔ suboptimal ∧ independent ∧ not final.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let k = rng.gen_range(1..=6);
            let texts: Vec<String> = (0..k).map(|i| format!("segment {i}. ")).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let subs = subs_from(&refs);
            let flags: Vec<[bool; 5]> = (0..k).map(|_| std::array::from_fn(|_| rng.gen())).collect();
            let v: Vec<CriterionVerdicts> = flags.iter().map(|f| verdicts(*f)).collect();
            let independents: Vec<bool> = (0..k).map(|_| rng.gen()).collect();
            let out = revise(&subs, "fin", &v, |s, _| {
                Ok::<_, Infallible>(IndependenceVerdict {
                    independent: independents[s.index],
                    judge_id: "t".into(),
                    raw_output: None,
                })
            })
            .unwrap();
            assert!(!out.retained.is_empty());
            let mut all: Vec<usize> = out.retained.iter().chain(&out.eliminated).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..k).collect::<Vec<_>>());
            for &i in &out.eliminated {
                assert_ne!(i, k - 1, "final index can never be eliminated");
                assert_eq!(
                    out.per_subtrajectory[&i].classification,
                    Classification::Suboptimal
                );
                assert!(out.per_subtrajectory[&i]
                    .independence
                    .as_ref()
                    .unwrap()
                    .independent);
            }
            // Subsequence property: revised text is the original minus whole
            // eliminated slices.
            let expected: String = out
                .retained
                .iter()
                .map(|&i| subs[i].text.as_str())
                .collect();
            assert_eq!(out.revised_text, expected);
        }
    }

    #[test]
    fn idempotent_under_rejudging_with_stable_verdicts() {
        // Re-segmenting the revised output and re-judging with verdicts keyed
        // by text must eliminate nothing further: retained suboptimal subs
        // were retained because they are dependent (or final), and that does
        // not change when other independent segments disappear.
        let subs = subs_from(&[
            "Define f(n) = n^2 + n. ",
            "Alternatively, idle guessing without conclusion. ",
            "Alternatively, f(4) = 20, so the answer is 20.",
        ]);
        let flags_by_text = |text: &str| {
            if text.contains("idle guessing") {
                [true, false, true, true, false]
            } else {
                [true; 5]
            }
        };
        let independent_by_text =
            |text: &str| -> bool { text.contains("idle guessing") };

        let v: Vec<CriterionVerdicts> =
            subs.iter().map(|s| verdicts(flags_by_text(&s.text))).collect();
        let first = revise(&subs, "boxed{20}", &v, |s, _| {
            Ok::<_, Infallible>(IndependenceVerdict {
                independent: independent_by_text(&s.text),
                judge_id: "t".into(),
                raw_output: None,
            })
        })
        .unwrap();
        assert_eq!(first.eliminated, [1]);

        // Second pass over the revised output.
        let texts: Vec<&str> = first
            .retained
            .iter()
            .map(|&i| subs[i].text.as_str())
            .collect();
        let resegmented = subs_from(&texts);
        let v2: Vec<CriterionVerdicts> = resegmented
            .iter()
            .map(|s| verdicts(flags_by_text(&s.text)))
            .collect();
        let second = revise(&resegmented, "boxed{20}", &v2, |s, _| {
            Ok::<_, Infallible>(IndependenceVerdict {
                independent: independent_by_text(&s.text),
                judge_id: "t".into(),
                raw_output: None,
            })
        })
        .unwrap();
        assert!(second.eliminated.is_empty());
        assert_eq!(second.revised_text, first.revised_text);
    }
}

//! `revise`: apply the elimination rule using the recorded verdicts.
//!
//! Pure and fast: the independence provider reads from the `judged`
//! annotation, so this stage never touches a backend. With
//! `reviser.rewrite_answer` the answer text is rebuilt around the revised
//! thinking and every annotation is re-indexed to match.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;
use subtraj_core::corpus::{DatasetRecord, Stage};
use subtraj_core::judge::{CriterionVerdicts, IndependenceVerdict};
use subtraj_core::reviser::{revise, RevisedThinking, ReviseError};
use subtraj_core::segmenter::{segment, MarkerConfig, Subtrajectory, ThinkingProcess};

use super::{
    load_segmentation, require_payload, run_map_stage, JudgedPayload, JudgedSub, Outcome,
    OriginalIndices, RevisedPayload, RevisedSub, SegmentedPayload, StageContext, StageSummary,
};
use crate::CliError;

pub fn run(
    ctx: &StageContext,
    input: &Path,
    output: &Path,
    rewrite_answer: bool,
) -> Result<StageSummary, CliError> {
    let rewrite = rewrite_answer || ctx.config.reviser.rewrite_answer;
    run_map_stage(
        ctx,
        Stage::Revised,
        "revise",
        input,
        output,
        None,
        &mut |record| revise_record(ctx, record, rewrite),
    )
}

fn revise_record(
    ctx: &StageContext,
    mut record: DatasetRecord,
    rewrite: bool,
) -> Result<Outcome, CliError> {
    let (thinking, subs) = match load_segmentation(&record, &ctx.config.delimiters) {
        Ok(v) => v,
        Err(e @ CliError::Dependency(_)) => return Err(e),
        Err(e) => {
            return Ok(Outcome::Reject {
                id: record.id,
                reasons: vec![],
                evidence: json!({"error": e.to_string()}),
            })
        }
    };
    let judged: JudgedPayload = require_payload(&record, Stage::Judged, "judge")?;
    if judged.subtrajectories.len() != subs.len() {
        return Ok(Outcome::Reject {
            id: record.id,
            reasons: vec![],
            evidence: json!({
                "error": "judged annotation does not match segmentation",
                "judged": judged.subtrajectories.len(),
                "segmented": subs.len(),
            }),
        });
    }
    let verdicts: Vec<CriterionVerdicts> = judged
        .subtrajectories
        .iter()
        .map(|j| CriterionVerdicts::from_flags(j.flags(), judged.judge_id.clone()))
        .collect();

    let provider = |sub: &Subtrajectory, _subsequent: &str| -> Result<IndependenceVerdict, String> {
        judged
            .subtrajectories
            .get(sub.index)
            .and_then(|j| j.independent)
            .map(|independent| IndependenceVerdict {
                independent,
                judge_id: judged.judge_id.clone(),
                raw_output: None,
            })
            .ok_or_else(|| format!("no recorded independence verdict for subtrajectory {}", sub.index))
    };

    let revised = match revise(&subs, &thinking.final_answer, &verdicts, provider) {
        Ok(r) => r,
        Err(ReviseError::Provider { index, source }) => {
            return Ok(Outcome::Reject {
                id: record.id,
                reasons: vec![subtraj_core::filters::RejectReason::JudgeUnparseable],
                evidence: json!({"subtrajectory": index, "error": source}),
            })
        }
        Err(e) => {
            return Ok(Outcome::Reject {
                id: record.id,
                reasons: vec![],
                evidence: json!({"error": e.to_string()}),
            })
        }
    };

    if rewrite && !revised.eliminated.is_empty() {
        apply_rewrite(ctx, &mut record, &thinking, &subs, &judged, &revised)?;
    } else {
        let per_subtrajectory: BTreeMap<usize, RevisedSub> = revised
            .per_subtrajectory
            .iter()
            .map(|(&i, a)| {
                (
                    i,
                    RevisedSub {
                        classification: a.classification,
                        independent: a.independence.as_ref().map(|v| v.independent),
                    },
                )
            })
            .collect();
        let payload = RevisedPayload {
            retained: revised.retained.clone(),
            eliminated: revised.eliminated.clone(),
            per_subtrajectory,
            rewrote_answer: false,
            original_indices: None,
        };
        record.attach(
            Stage::Revised,
            ctx.attachment(serde_json::to_value(payload).expect("payload serializes")),
        );
    }
    Ok(Outcome::Keep(Box::new(record)))
}

/// Rebuild the answer around the revised thinking and re-index the
/// segmentation, verdict, and revision annotations to the new layout.
fn apply_rewrite(
    ctx: &StageContext,
    record: &mut DatasetRecord,
    thinking: &ThinkingProcess,
    subs: &[Subtrajectory],
    judged: &JudgedPayload,
    revised: &RevisedThinking,
) -> Result<(), CliError> {
    let new_thinking = ThinkingProcess {
        text: revised.revised_text.clone(),
        final_answer: thinking.final_answer.clone(),
        had_delimiters: thinking.had_delimiters,
        preface: thinking.preface.clone(),
    };
    record.answer = new_thinking.reconstruct(&ctx.config.delimiters);

    // Retained subtrajectories, re-indexed over the revised text.
    let mut new_subs = Vec::with_capacity(revised.retained.len());
    let mut char_pos = 0usize;
    for (new_index, &old_index) in revised.retained.iter().enumerate() {
        let old = &subs[old_index];
        let len = old.char_span.1 - old.char_span.0;
        new_subs.push(Subtrajectory {
            index: new_index,
            text: old.text.clone(),
            marker: old.marker.clone(),
            char_span: (char_pos, char_pos + len),
        });
        char_pos += len;
    }
    let marker_config: MarkerConfig = ctx.config.segmenter.clone();
    debug_assert!(
        !segment(&new_thinking, &marker_config).is_empty(),
        "revised thinking remains segmentable"
    );
    record.attach(
        Stage::Segmented,
        ctx.attachment(
            serde_json::to_value(SegmentedPayload::from_subs(
                new_thinking.had_delimiters,
                &marker_config,
                &new_subs,
            ))
            .expect("payload serializes"),
        ),
    );

    let new_judged = JudgedPayload {
        judge_id: judged.judge_id.clone(),
        backend: judged.backend.clone(),
        template_version: judged.template_version.clone(),
        subtrajectories: revised
            .retained
            .iter()
            .enumerate()
            .map(|(new_index, &old_index)| JudgedSub {
                index: new_index,
                ..judged.subtrajectories[old_index].clone()
            })
            .collect(),
    };
    record.attach(
        Stage::Judged,
        ctx.attachment(serde_json::to_value(new_judged).expect("payload serializes")),
    );

    let per_subtrajectory: BTreeMap<usize, RevisedSub> = revised
        .retained
        .iter()
        .enumerate()
        .map(|(new_index, &old_index)| {
            let a = &revised.per_subtrajectory[&old_index];
            (
                new_index,
                RevisedSub {
                    classification: a.classification,
                    independent: a.independence.as_ref().map(|v| v.independent),
                },
            )
        })
        .collect();
    let payload = RevisedPayload {
        retained: (0..revised.retained.len()).collect(),
        eliminated: vec![],
        per_subtrajectory,
        rewrote_answer: true,
        original_indices: Some(OriginalIndices {
            retained: revised.retained.clone(),
            eliminated: revised.eliminated.clone(),
        }),
    };
    record.attach(
        Stage::Revised,
        ctx.attachment(serde_json::to_value(payload).expect("payload serializes")),
    );
    Ok(())
}

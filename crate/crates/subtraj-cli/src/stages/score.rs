//! `score`: token-weighted (or equal-weighted) quality scores over the
//! retained subtrajectories.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;
use subtraj_core::corpus::Stage;
use subtraj_core::judge::CriterionVerdicts;
use subtraj_core::reviser::{RevisedThinking, SubAssessment};
use subtraj_core::scorer::{quality_score, ScoreError, Weighting};

use super::{
    load_segmentation, require_payload, run_map_stage, tokenizer_from_config, JudgedPayload,
    Outcome, RevisedPayload, ScoredPayload, StageContext, StageSummary, TokenizerInfo,
};
use crate::CliError;

pub fn run(
    ctx: &StageContext,
    input: &Path,
    output: &Path,
    weighting_override: Option<Weighting>,
) -> Result<StageSummary, CliError> {
    let tokenizer = tokenizer_from_config(&ctx.config)?;
    let weighting = weighting_override.unwrap_or(ctx.config.scorer.weighting);
    let tokenizer_info = TokenizerInfo {
        name: tokenizer.name().to_string(),
        version: tokenizer.version().to_string(),
    };
    run_map_stage(
        ctx,
        Stage::Scored,
        "score",
        input,
        output,
        None,
        &mut |mut record| {
            let (_, subs) = match load_segmentation(&record, &ctx.config.delimiters) {
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
            let revised: RevisedPayload = require_payload(&record, Stage::Revised, "revise")?;

            // Rebuild the revision outcome the scorer consumes.
            let mut per_subtrajectory = BTreeMap::new();
            for j in &judged.subtrajectories {
                per_subtrajectory.insert(
                    j.index,
                    SubAssessment {
                        verdicts: CriterionVerdicts::from_flags(j.flags(), judged.judge_id.clone()),
                        classification: j.classification,
                        independence: None,
                    },
                );
            }
            let revised_thinking = RevisedThinking {
                retained: revised.retained.clone(),
                eliminated: revised.eliminated.clone(),
                revised_text: String::new(), // not needed for scoring
                per_subtrajectory,
            };
            let scored = match quality_score(&revised_thinking, &subs, tokenizer.as_ref(), weighting)
            {
                Ok(s) => s,
                Err(e @ (ScoreError::ZeroTotalTokens | ScoreError::EmptyRetained)) => {
                    return Ok(Outcome::Reject {
                        id: record.id,
                        reasons: vec![],
                        evidence: json!({"error": e.to_string()}),
                    })
                }
                Err(e) => {
                    return Ok(Outcome::Reject {
                        id: record.id,
                        reasons: vec![],
                        evidence: json!({"error": format!("inconsistent annotations: {e}")}),
                    })
                }
            };
            let payload = ScoredPayload {
                scored,
                tokenizer: tokenizer_info.clone(),
            };
            record.attach(
                Stage::Scored,
                ctx.attachment(serde_json::to_value(payload).expect("payload serializes")),
            );
            Ok(Outcome::Keep(Box::new(record)))
        },
    )
}

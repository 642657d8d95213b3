//! `segment`: extract the thinking block and split it at transition markers.

use std::path::Path;

use serde_json::json;
use subtraj_core::corpus::Stage;
use subtraj_core::filters::RejectReason;
use subtraj_core::segmenter::{extract_thinking, segment, ExtractError};

use super::{run_map_stage, Outcome, SegmentedPayload, StageContext, StageSummary};
use crate::CliError;

pub fn run(ctx: &StageContext, input: &Path, output: &Path) -> Result<StageSummary, CliError> {
    let delimiters = ctx.config.delimiters.clone();
    let marker_config = ctx.config.segmenter.clone();
    run_map_stage(
        ctx,
        Stage::Segmented,
        "segment",
        input,
        output,
        None,
        &mut |mut record| {
            let thinking = match extract_thinking(&record.answer, &delimiters) {
                Ok(tp) => tp,
                Err(e @ ExtractError::Truncated { .. }) => {
                    return Ok(Outcome::Reject {
                        id: record.id,
                        reasons: vec![RejectReason::Truncated],
                        evidence: json!({"error": e.to_string()}),
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
            let subs = segment(&thinking, &marker_config);
            if subs.is_empty() {
                return Ok(Outcome::Reject {
                    id: record.id,
                    reasons: vec![],
                    evidence: json!({"error": "empty thinking text"}),
                });
            }
            let payload = SegmentedPayload::from_subs(thinking.had_delimiters, &marker_config, &subs);
            record.attach(
                Stage::Segmented,
                ctx.attachment(serde_json::to_value(payload).expect("payload serializes")),
            );
            Ok(Outcome::Keep(Box::new(record)))
        },
    )
}

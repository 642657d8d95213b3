//! `pipeline`: the whole chain with file handoffs between stages, so every
//! intermediate corpus is inspectable and the expensive judge stage can be
//! resumed from its cache.
//!
//! filter → decontaminate → segment → judge → revise → score → sample →
//! report. The report compares the sampled subset against the full scored
//! corpus.

use std::path::{Path, PathBuf};

use serde_json::json;
use subtraj_core::report::compare;

use super::{
    decontaminate::{self, DecontaminateStageOptions},
    filter::{self, FilterStageOptions},
    judge::{self, JudgeStageOptions},
    report::collect_stats,
    revise, sample,
    sample::SampleStageOptions,
    score, segment, write_json_file, StageContext, StageSummary,
};
use crate::CliError;

pub struct PipelineOptions {
    pub d_override: Option<usize>,
}

pub fn run(
    ctx: &StageContext,
    input: &Path,
    out_dir: &Path,
    opts: &PipelineOptions,
) -> Result<Vec<StageSummary>, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        CliError::Data(format!("cannot create out dir {}: {e}", out_dir.display()))
    })?;
    let path = |name: &str| -> PathBuf { out_dir.join(name) };
    let mut summaries = Vec::new();

    let filtered = path("01_filtered.jsonl");
    summaries.push(filter::run(
        ctx,
        input,
        &filtered,
        &FilterStageOptions {
            difficulty_override: None,
            rejections: None,
        },
    )?);

    let decontaminated = path("02_decontaminated.jsonl");
    summaries.push(decontaminate::run(
        ctx,
        &filtered,
        &decontaminated,
        &DecontaminateStageOptions {
            benchmarks_override: vec![],
            rejections: None,
        },
    )?);

    let segmented = path("03_segmented.jsonl");
    summaries.push(segment::run(ctx, &decontaminated, &segmented)?);

    let judged = path("04_judged.jsonl");
    summaries.push(judge::run(
        ctx,
        &segmented,
        &judged,
        &JudgeStageOptions {
            cache_dir_override: None,
            backend_override: None,
        },
    )?);

    let revised = path("05_revised.jsonl");
    summaries.push(revise::run(ctx, &judged, &revised, false)?);

    let scored = path("06_scored.jsonl");
    summaries.push(score::run(ctx, &revised, &scored, None)?);

    let sampled = path("07_sampled.jsonl");
    summaries.push(sample::run(
        ctx,
        &scored,
        &sampled,
        &SampleStageOptions {
            d_override: opts.d_override,
            epsilon_override: None,
            ids_path: None,
            audit_path: None,
        },
    )?);

    // Final report: the sampled subset against the full scored corpus.
    let view = ctx.config.report.view;
    let before = collect_stats(ctx, &scored, view)?;
    let after = collect_stats(ctx, &sampled, view)?;
    let delta = compare(&before, &after);
    let report = json!({
        "schema": "pipeline-report/v1",
        "config_hash": ctx.config_hash,
        "before": before,
        "after": after,
        "delta": delta,
    });
    let report_path = path("report.json");
    write_json_file(&report_path, &report)?;
    let mut summary = StageSummary::new("report");
    summary.records_in = before.records as u64;
    summary.records_out = after.records as u64;
    summary.note("file", report_path.display());
    summaries.push(summary);

    Ok(summaries)
}

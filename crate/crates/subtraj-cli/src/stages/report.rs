//! `report`: thinking-efficacy statistics over a segmented corpus, and
//! percentage-delta reports against a baseline stats file.

use std::io::Write;
use std::path::{Path, PathBuf};

use subtraj_core::corpus::{read_records, Stage};
use subtraj_core::report::{
    compare, corpus_stats, render_delta, render_stats, EfficacyStats, RecordView, ReportFormat,
};
use subtraj_core::reviser::Classification;

use super::{
    corpus_error, create_output, load_segmentation, open_input, require_payload,
    tokenizer_from_config, JudgedPayload, RevisedPayload, StageContext, StageSummary,
};
use crate::config::ReportView;
use crate::CliError;

pub struct ReportStageOptions {
    pub output: Option<PathBuf>,
    pub format_override: Option<ReportFormat>,
    pub view_override: Option<ReportView>,
    pub baseline: Option<PathBuf>,
}

/// Build the statistics view of one corpus.
pub fn collect_stats(
    ctx: &StageContext,
    input: &Path,
    view: ReportView,
) -> Result<EfficacyStats, CliError> {
    let tokenizer = tokenizer_from_config(&ctx.config)?;
    let mut views = Vec::new();
    for item in read_records(open_input(input)?, ctx.config.parse_mode()) {
        let record = match item {
            Ok(record) => record,
            Err(e) if ctx.config.lenient => {
                eprintln!("report: skipping line: {e}");
                continue;
            }
            Err(e) => return Err(corpus_error(e)),
        };
        let (_, subs) = load_segmentation(&record, &ctx.config.delimiters)?;
        let judged: Option<JudgedPayload> = record
            .has_stage(Stage::Judged)
            .then(|| require_payload(&record, Stage::Judged, "judge"))
            .transpose()?;
        let indices: Vec<usize> = match view {
            ReportView::Original => (0..subs.len()).collect(),
            ReportView::Revised => {
                let revised: RevisedPayload = require_payload(&record, Stage::Revised, "revise")?;
                revised.retained
            }
        };
        let tokens_per_sub: Vec<usize> = indices
            .iter()
            .map(|&i| tokenizer.count(&subs[i].text))
            .collect();
        let suboptimal = judged.map(|j| {
            indices
                .iter()
                .map(|&i| {
                    j.subtrajectories
                        .iter()
                        .find(|s| s.index == i)
                        .map(|s| s.classification == Classification::Suboptimal)
                        .unwrap_or(false)
                })
                .collect()
        });
        views.push(RecordView {
            tokens_per_sub,
            suboptimal,
        });
    }
    corpus_stats(views).map_err(|e| CliError::Data(e.to_string()))
}

pub fn run(ctx: &StageContext, input: &Path, opts: &ReportStageOptions) -> Result<StageSummary, CliError> {
    let view = opts.view_override.unwrap_or(ctx.config.report.view);
    let format = opts.format_override.unwrap_or(ctx.config.report.format);
    let stats = collect_stats(ctx, input, view)?;

    let rendered = match &opts.baseline {
        None => render_stats(&stats, format),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Data(format!("cannot read baseline {}: {e}", path.display()))
            })?;
            let baseline: EfficacyStats = serde_json::from_str(&text).map_err(|e| {
                CliError::Data(format!("invalid baseline {}: {e}", path.display()))
            })?;
            render_delta(&compare(&baseline, &stats), format)
        }
    };

    match &opts.output {
        Some(path) => {
            let mut writer = create_output(path)?;
            writer
                .write_all(rendered.as_bytes())
                .and_then(|_| writer.flush())
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        }
        None => print!("{rendered}"),
    }

    let mut summary = StageSummary::new("report");
    summary.records_in = stats.records as u64;
    summary.records_out = stats.records as u64;
    summary.note("view", format!("{view:?}").to_lowercase());
    if let Some(path) = &opts.output {
        summary.note("file", path.display());
    }
    if opts.baseline.is_some() {
        summary.note("mode", "delta");
    }
    Ok(summary)
}

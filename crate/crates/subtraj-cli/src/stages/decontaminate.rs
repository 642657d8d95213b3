//! `decontaminate`: drop records sharing an exact n-token window with any
//! benchmark question.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::json;
use subtraj_core::corpus::Stage;
use subtraj_core::filters::{decontaminate, NGramIndex};

use super::{open_input, run_map_stage, Outcome, StageContext, StageSummary};
use crate::CliError;

#[derive(Deserialize)]
struct BenchmarkLine {
    #[serde(default)]
    id: Option<String>,
    question: String,
}

/// Load benchmark questions from JSONL files with `question` and optional
/// `id` fields. Missing ids default to `<file-stem>#<line>`.
pub fn load_benchmarks(paths: &[PathBuf]) -> Result<Vec<(String, String)>, CliError> {
    use std::io::BufRead;
    let mut items = Vec::new();
    for path in paths {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "benchmark".into());
        let reader = open_input(path)?;
        for (i, line) in reader.lines().enumerate() {
            let line = line
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: BenchmarkLine = serde_json::from_str(&line).map_err(|e| {
                CliError::Data(format!("{}:{}: invalid benchmark line: {e}", path.display(), i + 1))
            })?;
            let id = parsed.id.unwrap_or_else(|| format!("{stem}#{}", i + 1));
            items.push((id, parsed.question));
        }
    }
    Ok(items)
}

pub struct DecontaminateStageOptions {
    pub benchmarks_override: Vec<PathBuf>,
    pub rejections: Option<PathBuf>,
}

pub fn run(
    ctx: &StageContext,
    input: &Path,
    output: &Path,
    opts: &DecontaminateStageOptions,
) -> Result<StageSummary, CliError> {
    let benchmark_paths = if opts.benchmarks_override.is_empty() {
        ctx.config.decontamination.benchmarks.clone()
    } else {
        opts.benchmarks_override.clone()
    };
    let items = load_benchmarks(&benchmark_paths)?;
    let n = ctx.config.decontamination.n;
    let index = NGramIndex::build(&items, n).map_err(|e| CliError::Config(e.to_string()))?;

    let payload = json!({
        "n": n,
        "benchmark_items": index.item_count(),
        "indexed_windows": index.len(),
        "skipped_short_items": index.skipped_short,
    });
    let mut summary = run_map_stage(
        ctx,
        Stage::Decontaminated,
        "decontaminate",
        input,
        output,
        opts.rejections.as_deref(),
        &mut |mut record| {
            let (verdict, hits) = decontaminate(&record, &index);
            if !verdict.keep {
                return Ok(Outcome::Reject {
                    id: record.id,
                    reasons: verdict.reasons,
                    evidence: json!({"hits": hits}),
                });
            }
            record.attach(Stage::Decontaminated, ctx.attachment(payload.clone()));
            Ok(Outcome::Keep(Box::new(record)))
        },
    )?;
    summary.note("benchmark_items", index.item_count());
    summary.note("indexed_windows", index.len());
    if index.skipped_short > 0 {
        summary.note("skipped_short_items", index.skipped_short);
    }
    Ok(summary)
}

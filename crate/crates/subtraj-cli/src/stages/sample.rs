//! `sample`: distribution-balanced subset selection over a scored corpus.
//!
//! Two streaming passes: the first collects (id, quality, count) triples and
//! runs the sweep; the second re-reads the corpus and emits the selected
//! records in input order. Alongside the corpus, the stage writes the id
//! list (one per line, selection order) and a JSON audit of all 41
//! candidates.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use subtraj_core::corpus::{read_records, write_record, Stage};
use subtraj_core::sampler::{select, SampleError, SamplingRun, ScoredItem};

use super::{
    corpus_error, create_output, open_input, refuse_reapplication, require_payload,
    write_json_file, SampledPayload, ScoredPayload, StageContext, StageSummary,
};
use crate::CliError;

pub struct SampleStageOptions {
    pub d_override: Option<usize>,
    pub epsilon_override: Option<f64>,
    pub ids_path: Option<PathBuf>,
    pub audit_path: Option<PathBuf>,
}

pub fn run(
    ctx: &StageContext,
    input: &Path,
    output: &Path,
    opts: &SampleStageOptions,
) -> Result<StageSummary, CliError> {
    let d = opts.d_override.unwrap_or(ctx.config.sampler.d);
    if d == 0 {
        return Err(CliError::Config(
            "sample requires a positive target size: set sampler.d or pass --d".into(),
        ));
    }
    let epsilon = opts.epsilon_override.unwrap_or(ctx.config.sampler.epsilon);

    // Pass 1: collect the sampler's view of every scored record.
    let mut items = Vec::new();
    let mut summary = StageSummary::new("sample");
    for item in read_records(open_input(input)?, ctx.config.parse_mode()) {
        let record = match item {
            Ok(record) => record,
            Err(e) if ctx.config.lenient => {
                eprintln!("sample: skipping line: {e}");
                summary.parse_errors += 1;
                continue;
            }
            Err(e) => return Err(corpus_error(e)),
        };
        refuse_reapplication(&record, Stage::Sampled, "sample", ctx.force)?;
        let scored: ScoredPayload = require_payload(&record, Stage::Scored, "score")?;
        items.push(ScoredItem {
            id: record.id,
            quality: scored.scored.quality_score,
            count: scored.scored.n,
        });
    }
    summary.records_in = items.len() as u64;

    let run: SamplingRun = select(&items, d, epsilon).map_err(|e| match e {
        SampleError::EmptyDataset | SampleError::InvalidTargetSize { .. } => {
            CliError::Data(e.to_string())
        }
        SampleError::InvalidEpsilon(_) => CliError::Config(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;

    // Id list, one per line in selection order.
    let ids_path = opts
        .ids_path
        .clone()
        .unwrap_or_else(|| output.with_extension("ids"));
    let mut ids_writer = create_output(&ids_path)?;
    for id in &run.sampled_ids {
        writeln!(ids_writer, "{id}")
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", ids_path.display())))?;
    }
    ids_writer
        .flush()
        .map_err(|e| CliError::Data(format!("cannot flush {}: {e}", ids_path.display())))?;

    // Audit report over the full sweep.
    let audit_path = opts
        .audit_path
        .clone()
        .unwrap_or_else(|| output.with_extension("audit.json"));
    let chosen = run
        .candidates
        .iter()
        .find(|c| c.j == run.chosen_j)
        .expect("chosen candidate exists");
    let audit = json!({
        "schema": "sampling-audit/v1",
        "d": run.d,
        "epsilon": run.epsilon,
        "config_hash": ctx.config_hash,
        "deltas": run.deltas,
        "chosen_j": run.chosen_j,
        "alpha": chosen.alpha,
        "kl": chosen.kl,
        "per_j": run
            .candidates
            .iter()
            .map(|c| json!({"j": c.j, "alpha": c.alpha, "kl": c.kl}))
            .collect::<Vec<_>>(),
    });
    write_json_file(&audit_path, &audit)?;

    // Pass 2: emit selected records in input order.
    let selected: HashSet<&str> = run.sampled_ids.iter().map(String::as_str).collect();
    let mut writer = create_output(output)?;
    let payload = SampledPayload {
        d: run.d,
        chosen_j: run.chosen_j,
        alpha: chosen.alpha,
        kl: chosen.kl,
    };
    let payload = serde_json::to_value(payload).expect("payload serializes");
    for item in read_records(open_input(input)?, ctx.config.parse_mode()) {
        let mut record = match item {
            Ok(record) => record,
            Err(_) => continue, // already reported in pass 1
        };
        if selected.contains(record.id.as_str()) {
            record.attach(Stage::Sampled, ctx.attachment(payload.clone()));
            write_record(&mut writer, &record).map_err(corpus_error)?;
            summary.records_out += 1;
        }
    }
    writer
        .flush()
        .map_err(|e| CliError::Data(format!("cannot flush {}: {e}", output.display())))?;

    summary.note("d", d);
    summary.note("chosen_j", run.chosen_j);
    summary.note("alpha", chosen.alpha);
    summary.note("kl", format!("{:.6}", chosen.kl));
    summary.note("ids", ids_path.display());
    summary.note("audit", audit_path.display());
    Ok(summary)
}

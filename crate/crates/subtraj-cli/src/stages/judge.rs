//! `judge`: five-criteria verdicts for every subtrajectory, plus
//! independence verdicts for suboptimal non-final ones.
//!
//! All backend cost lives in this stage; revision afterwards is pure. The
//! verdict cache makes re-runs and resumes free: a record judged before an
//! interruption costs zero backend calls the second time.

use std::path::{Path, PathBuf};

use serde_json::json;
use subtraj_core::corpus::{read_records, write_record, DatasetRecord, Stage};
use subtraj_core::filters::RejectReason;
use subtraj_core::judge::{
    BackendError, CriteriaContext, HttpBackend, Judge, JudgeBackend, JudgeError, JudgeOptions,
    ScriptedJudge, VerdictCache,
};
use subtraj_core::reviser::{classify, Classification};
use subtraj_core::segmenter::Subtrajectory;

use super::{
    corpus_error, create_output, default_rejections_path, load_segmentation, open_input,
    parallel_map, refuse_reapplication, templates_from_config, JudgedPayload, JudgedSub,
    Outcome, RejectionLog, StageContext, StageSummary,
};
use crate::config::JudgeBackendKind;
use crate::CliError;

pub struct JudgeStageOptions {
    pub cache_dir_override: Option<PathBuf>,
    pub backend_override: Option<JudgeBackendKind>,
}

enum Backend {
    Scripted(ScriptedJudge),
    Http(HttpBackend),
}

impl Backend {
    fn as_dyn(&self) -> &dyn JudgeBackend {
        match self {
            Backend::Scripted(b) => b,
            Backend::Http(b) => b,
        }
    }
}

pub fn run(
    ctx: &StageContext,
    input: &Path,
    output: &Path,
    opts: &JudgeStageOptions,
) -> Result<StageSummary, CliError> {
    let backend_kind = opts.backend_override.unwrap_or(ctx.config.judge.backend);
    let backend = match backend_kind {
        JudgeBackendKind::Scripted => Backend::Scripted(ScriptedJudge::new()),
        JudgeBackendKind::Http => Backend::Http(
            HttpBackend::new(ctx.config.judge.http.clone())
                .map_err(|e| CliError::Config(format!("judge.http: {e}")))?,
        ),
    };

    let cache_dir = opts
        .cache_dir_override
        .clone()
        .or_else(|| {
            (!ctx.config.judge.cache_dir.is_empty())
                .then(|| PathBuf::from(&ctx.config.judge.cache_dir))
        });
    let cache = match &cache_dir {
        Some(dir) => VerdictCache::at_dir(dir).map_err(|e| CliError::Data(e.to_string()))?,
        None => VerdictCache::in_memory(),
    };

    let judge = Judge::new(
        backend.as_dyn(),
        &cache,
        templates_from_config(&ctx.config)?,
        JudgeOptions {
            context_window: ctx.config.judge.context_subtrajectories,
            max_prompt_tokens: ctx.config.judge.max_prompt_tokens,
            max_retries: ctx.config.judge.max_retries,
            retry_base_ms: ctx.config.judge.retry_base_ms,
        },
    );

    let reader = open_input(input)?;
    let mut writer = create_output(output)?;
    let mut log = RejectionLog::create(&default_rejections_path(output))?;
    let mut summary = StageSummary::new("judge");

    let store_raw = ctx.config.judge.store_raw_output;
    let concurrency = ctx.config.judge.concurrency.max(1);
    let batch_size = (concurrency * 16).max(64);

    let mut records = read_records(reader, ctx.config.parse_mode());
    let mut done = false;
    while !done {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            match records.next() {
                Some(Ok(record)) => batch.push(record),
                Some(Err(e)) if ctx.config.lenient => {
                    eprintln!("judge: skipping line: {e}");
                    summary.parse_errors += 1;
                }
                Some(Err(e)) => return Err(corpus_error(e)),
                None => {
                    done = true;
                    break;
                }
            }
        }
        if batch.is_empty() {
            break;
        }
        summary.records_in += batch.len() as u64;
        for record in &batch {
            refuse_reapplication(record, Stage::Judged, "judge", ctx.force)?;
            if let Backend::Scripted(scripted) = &backend {
                scripted.register_record(record).map_err(|e| {
                    CliError::Data(format!("record {:?}: invalid scripted field: {e}", record.id))
                })?;
            }
        }
        let outcomes = parallel_map(batch, concurrency, |record| {
            judge_record(ctx, &judge, record, store_raw)
        });
        for outcome in outcomes {
            match outcome? {
                Outcome::Keep(record) => {
                    write_record(&mut writer, &record).map_err(corpus_error)?;
                    summary.records_out += 1;
                }
                Outcome::Reject {
                    id,
                    reasons,
                    evidence,
                } => {
                    log.write(Stage::Judged, &id, &reasons, evidence)?;
                    summary.rejected += 1;
                }
            }
        }
    }

    use std::io::Write as _;
    writer
        .flush()
        .map_err(|e| CliError::Data(format!("cannot flush {}: {e}", output.display())))?;
    log.finish()?;
    summary.note("backend_calls", backend.as_dyn().calls());
    summary.note("cache_hits", cache.hits());
    if let Some(dir) = &cache_dir {
        summary.note("cache_dir", dir.display());
    }
    Ok(summary)
}

/// Judge one record: criteria per subtrajectory, independence where the
/// elimination rule will need it. Verdict problems flag the record;
/// infrastructure problems abort the stage.
fn judge_record(
    ctx: &StageContext,
    judge: &Judge<'_>,
    record: &DatasetRecord,
    store_raw: bool,
) -> Result<Outcome, CliError> {
    let (thinking, subs) = match load_segmentation(record, &ctx.config.delimiters) {
        Ok(v) => v,
        Err(e @ CliError::Dependency(_)) => return Err(e),
        Err(e) => {
            return Ok(Outcome::Reject {
                id: record.id.clone(),
                reasons: vec![],
                evidence: json!({"error": e.to_string()}),
            })
        }
    };

    let mut judged_subs = Vec::with_capacity(subs.len());
    let last = subs.len() - 1;
    for (i, sub) in subs.iter().enumerate() {
        let verdicts = match judge.judge_criteria(
            sub,
            &CriteriaContext {
                record_id: &record.id,
                question: &record.question,
                preceding: &subs[..i],
            },
        ) {
            Ok(v) => v,
            Err(e) => return flag_or_abort(record, sub, e),
        };
        let classification = classify(&verdicts);
        let mut independent = None;
        let mut raw_independence = None;
        if classification == Classification::Suboptimal && i != last {
            let mut later = String::new();
            for s in &subs[i + 1..] {
                later.push_str(&s.text);
            }
            later.push_str(&thinking.final_answer);
            match judge.judge_independence(sub, &later, &record.id) {
                Ok(v) => {
                    independent = Some(v.independent);
                    raw_independence = v.raw_output;
                }
                Err(e) => return flag_or_abort(record, sub, e),
            }
        }
        let flags = verdicts.flags();
        judged_subs.push(JudgedSub {
            index: sub.index,
            effort: flags[0],
            effectiveness: flags[1],
            coherence: flags[2],
            preliminary_conclusion: flags[3],
            valid_verification: flags[4],
            classification,
            independent,
            raw_criteria: store_raw.then_some(verdicts.raw_output).flatten(),
            raw_independence: store_raw.then_some(raw_independence).flatten(),
        });
    }

    let payload = JudgedPayload {
        judge_id: judge.judge_id(),
        backend: judge.judge_id().split(':').next().unwrap_or("").to_string(),
        template_version: judge.templates().version.clone(),
        subtrajectories: judged_subs,
    };
    let mut record = record.clone();
    record.attach(
        Stage::Judged,
        ctx.attachment(serde_json::to_value(payload).expect("payload serializes")),
    );
    Ok(Outcome::Keep(Box::new(record)))
}

/// Unparseable replies and scripted-fixture gaps flag the record as
/// judge-unparseable and exclude it downstream; transport failures that
/// survived the retry loop abort the run.
fn flag_or_abort(
    record: &DatasetRecord,
    sub: &Subtrajectory,
    e: JudgeError,
) -> Result<Outcome, CliError> {
    match &e {
        JudgeError::Unparseable { .. }
        | JudgeError::Backend {
            source: BackendError::Script(_),
            ..
        } => Ok(Outcome::Reject {
            id: record.id.clone(),
            reasons: vec![RejectReason::JudgeUnparseable],
            evidence: json!({"subtrajectory": sub.index, "error": e.to_string()}),
        }),
        JudgeError::Cache(_) => Err(CliError::Data(e.to_string())),
        _ => Err(CliError::Backend(e.to_string())),
    }
}

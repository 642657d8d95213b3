//! `filter`: rule-based quality filtering, boxed-answer requirement, and
//! optional difficulty filtering over solver/grader clients.

use std::path::{Path, PathBuf};

use serde_json::json;
use subtraj_core::corpus::{DatasetRecord, Stage};
use subtraj_core::filters::{
    difficulty_filter, has_boxed_answer, BasicFilter, ExactMatchGrader, FilterVerdict,
    GraderClient, HttpGrader, HttpSolver, RejectReason, ScriptedSolver, SolverClient,
};
use subtraj_core::judge::{
    BackendError, HttpBackend, HttpBackendConfig, JudgeError, PromptTemplates, VerdictCache,
};
use subtraj_core::segmenter::extract_thinking;

use super::{run_map_stage, templates_from_config, Outcome, StageContext, StageSummary};
use crate::config::DifficultyMode;
use crate::CliError;

pub struct FilterStageOptions {
    pub difficulty_override: Option<DifficultyMode>,
    pub rejections: Option<PathBuf>,
}

struct HttpDifficulty {
    solver_backends: Vec<HttpBackend>,
    grader_backend: HttpBackend,
    cache: VerdictCache,
    templates: PromptTemplates,
}

pub fn run(
    ctx: &StageContext,
    input: &Path,
    output: &Path,
    opts: &FilterStageOptions,
) -> Result<StageSummary, CliError> {
    let basic = BasicFilter::new(ctx.config.basic_filter_config());
    let difficulty = opts.difficulty_override.unwrap_or(ctx.config.filters.difficulty);
    let require_boxed = ctx.config.filters.require_boxed;
    let attempts = ctx.config.filters.attempts_per_solver;

    let scripted_solvers = (ScriptedSolver::new(0), ScriptedSolver::new(1));
    let exact_grader = ExactMatchGrader::new();
    let http = match difficulty {
        DifficultyMode::Http => Some(build_http_difficulty(ctx)?),
        _ => None,
    };

    let mut summary = run_map_stage(
        ctx,
        Stage::Filtered,
        "filter",
        input,
        output,
        opts.rejections.as_deref(),
        &mut |mut record| {
            let verdict = basic.check(&record);
            if !verdict.keep {
                return Ok(Outcome::Reject {
                    id: record.id,
                    reasons: verdict.reasons,
                    evidence: json!({"filter": "basic"}),
                });
            }
            if require_boxed && difficulty == DifficultyMode::Off {
                // The difficulty filter re-checks this itself; standalone
                // mode still enforces the boxed-answer rule.
                let boxed = match extract_thinking(&record.answer, &ctx.config.delimiters) {
                    Ok(tp) if tp.had_delimiters => has_boxed_answer(&tp.final_answer),
                    _ => has_boxed_answer(&record.answer),
                };
                if !boxed && record.ground_truth.is_none() {
                    return Ok(Outcome::Reject {
                        id: record.id,
                        reasons: vec![RejectReason::NoBoxedAnswer],
                        evidence: json!({"filter": "boxed"}),
                    });
                }
            }
            let difficulty_verdict = match difficulty {
                DifficultyMode::Off => None,
                DifficultyMode::Scripted => {
                    scripted_solvers.0.register_record(&record).map_err(|e| {
                        CliError::Data(format!("record {:?}: invalid scripted field: {e}", record.id))
                    })?;
                    scripted_solvers.1.register_record(&record).map_err(|e| {
                        CliError::Data(format!("record {:?}: invalid scripted field: {e}", record.id))
                    })?;
                    let solvers: [&dyn SolverClient; 2] =
                        [&scripted_solvers.0, &scripted_solvers.1];
                    Some(run_difficulty(
                        ctx,
                        &record,
                        &solvers,
                        attempts,
                        &exact_grader,
                    ))
                }
                DifficultyMode::Http => {
                    let http = http.as_ref().expect("built above");
                    let solver0 = HttpSolver::new(
                        &http.solver_backends[0],
                        &http.cache,
                        &http.templates,
                        "solver-0",
                    );
                    let solver1 = HttpSolver::new(
                        &http.solver_backends[1],
                        &http.cache,
                        &http.templates,
                        "solver-1",
                    );
                    let grader = HttpGrader::new(&http.grader_backend, &http.cache, &http.templates);
                    let solvers: [&dyn SolverClient; 2] = [&solver0, &solver1];
                    Some(run_difficulty(ctx, &record, &solvers, attempts, &grader))
                }
            };
            match difficulty_verdict {
                None => {}
                Some(Ok(v)) if v.keep => {}
                Some(Ok(v)) => {
                    return Ok(Outcome::Reject {
                        id: record.id,
                        reasons: v.reasons,
                        evidence: json!({"filter": "difficulty"}),
                    })
                }
                Some(Err(e)) => return flag_or_abort(&record, e),
            }
            let payload = json!({
                "checks": {
                    "basic": true,
                    "boxed": require_boxed,
                    "difficulty": match difficulty {
                        DifficultyMode::Off => "off",
                        DifficultyMode::Scripted => "scripted",
                        DifficultyMode::Http => "http",
                    },
                },
            });
            record.attach(Stage::Filtered, ctx.attachment(payload));
            Ok(Outcome::Keep(Box::new(record)))
        },
    )?;
    summary.note("difficulty", format!("{difficulty:?}").to_lowercase());
    Ok(summary)
}

fn run_difficulty(
    ctx: &StageContext,
    record: &DatasetRecord,
    solvers: &[&dyn SolverClient],
    attempts: usize,
    grader: &dyn GraderClient,
) -> Result<FilterVerdict, JudgeError> {
    difficulty_filter(record, solvers, attempts, grader, &ctx.config.delimiters)
}

fn flag_or_abort(record: &DatasetRecord, e: JudgeError) -> Result<Outcome, CliError> {
    match &e {
        JudgeError::Unparseable { .. }
        | JudgeError::Backend {
            source: BackendError::Script(_),
            ..
        } => Ok(Outcome::Reject {
            id: record.id.clone(),
            reasons: vec![RejectReason::JudgeUnparseable],
            evidence: json!({"filter": "difficulty", "error": e.to_string()}),
        }),
        JudgeError::Cache(_) => Err(CliError::Data(e.to_string())),
        _ => Err(CliError::Backend(e.to_string())),
    }
}

fn build_http_difficulty(ctx: &StageContext) -> Result<HttpDifficulty, CliError> {
    let cfg = &ctx.config.filters.solver_http;
    let mut solver_backends = Vec::new();
    for (i, endpoint) in cfg.endpoints.iter().enumerate() {
        solver_backends.push(
            HttpBackend::new(HttpBackendConfig {
                endpoint: endpoint.clone(),
                model: cfg.models.get(i).cloned().unwrap_or_default(),
                temperature: cfg.temperature,
                max_tokens: cfg.max_tokens,
                api_key_env: cfg.api_key_env.clone(),
                timeout_secs: 120,
            })
            .map_err(|e| CliError::Config(format!("filters.solver_http: {e}")))?,
        );
    }
    let grader_backend = HttpBackend::new(HttpBackendConfig {
        endpoint: cfg.grader_endpoint.clone(),
        model: cfg.grader_model.clone(),
        temperature: 0.0,
        max_tokens: 64,
        api_key_env: cfg.api_key_env.clone(),
        timeout_secs: 120,
    })
    .map_err(|e| CliError::Config(format!("filters.solver_http grader: {e}")))?;
    let cache = if ctx.config.judge.cache_dir.is_empty() {
        VerdictCache::in_memory()
    } else {
        VerdictCache::at_dir(Path::new(&ctx.config.judge.cache_dir))
            .map_err(|e| CliError::Data(e.to_string()))?
    };
    Ok(HttpDifficulty {
        solver_backends,
        grader_backend,
        cache,
        templates: templates_from_config(&ctx.config)?,
    })
}

//! Stage-per-subcommand curation pipeline over JSONL reasoning-trace
//! corpora. Each subcommand reads a corpus, appends its stage annotation,
//! and writes a new corpus; `pipeline` chains them all with file handoffs.
//!
//! Exit codes: 0 success, 2 config error, 3 dependency error, 4 backend
//! failure, 5 data error. Failures print a machine-readable JSON summary on
//! stderr.

mod config;
mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use config::{DifficultyMode, JudgeBackendKind, PipelineConfig, ReportView};
use stages::{
    decontaminate::DecontaminateStageOptions, filter::FilterStageOptions,
    judge::JudgeStageOptions, pipeline::PipelineOptions, report::ReportStageOptions,
    sample::SampleStageOptions, StageContext,
};
use subtraj_core::report::ReportFormat;
use subtraj_core::scorer::Weighting;

/// Errors mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Dependency(String),
    Backend(String),
    Data(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Dependency(_) => "dependency",
            CliError::Backend(_) => "backend",
            CliError::Data(_) => "data",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dependency(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Data(_) => 5,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Dependency(m)
            | CliError::Backend(m)
            | CliError::Data(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

#[derive(Parser)]
#[command(
    name = "subtraj",
    version,
    about = "Curation pipeline for long-form reasoning traces: segment, judge, revise, score, sample"
)]
struct Cli {
    /// Pipeline config file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Continue past malformed corpus lines instead of aborting.
    #[arg(long, global = true)]
    lenient: bool,
    /// Re-apply a stage even when its annotation is already present.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    TokenWeighted,
    Equal,
}

#[derive(Clone, Copy, ValueEnum)]
enum DifficultyArg {
    Off,
    Scripted,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    MarkdownTable,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ViewArg {
    Original,
    Revised,
}

#[derive(Subcommand)]
enum Command {
    /// Split each record's thinking block into subtrajectories.
    Segment {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Judge every subtrajectory against the five criteria (plus
    /// independence where elimination may apply).
    Judge {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Override judge.backend from the config.
        #[arg(long)]
        backend: Option<BackendArg>,
        /// Override judge.cache_dir from the config.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Eliminate suboptimal, independent subtrajectories.
    Revise {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Rewrite the answer text with the revised thinking (SFT export).
        #[arg(long)]
        rewrite_answer: bool,
    },
    /// Compute quality scores over retained subtrajectories.
    Score {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        weighting: Option<WeightingArg>,
    },
    /// Select a target-size subset balancing quality against the
    /// subtrajectory-count distribution.
    Sample {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Target subset size (overrides sampler.d).
        #[arg(long)]
        d: Option<usize>,
        /// KL smoothing epsilon (overrides sampler.epsilon).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Selected-ids file (default: output with .ids extension).
        #[arg(long)]
        ids: Option<PathBuf>,
        /// Sweep audit JSON (default: output with .audit.json extension).
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Rule-based quality filter, boxed-answer check, difficulty filter.
    Filter {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        difficulty: Option<DifficultyArg>,
        /// Rejection log (default: output with .rejections.jsonl extension).
        #[arg(long)]
        rejections: Option<PathBuf>,
    },
    /// Drop records sharing an n-token window with benchmark questions.
    Decontaminate {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Benchmark question files (JSONL); overrides the config list.
        #[arg(long)]
        benchmarks: Vec<PathBuf>,
        #[arg(long)]
        rejections: Option<PathBuf>,
    },
    /// Thinking-efficacy statistics; with --baseline, a delta report.
    Report {
        #[arg(short, long)]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        format: Option<FormatArg>,
        /// Previously emitted stats JSON to diff against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Measure original or revised thinking.
        #[arg(long)]
        view: Option<ViewArg>,
    },
    /// Run the whole chain: filter, decontaminate, segment, judge, revise,
    /// score, sample, report.
    Pipeline {
        #[arg(short, long)]
        input: PathBuf,
        /// Directory for intermediate and final corpora.
        #[arg(short, long)]
        out_dir: PathBuf,
        /// Target subset size (overrides sampler.d).
        #[arg(long)]
        d: Option<usize>,
    },
}

/// Die quietly on a closed pipe (`subtraj report ... | head`) instead of
/// panicking mid-print.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() {
    reset_sigpipe();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": e.kind(), "message": e.message(), "exit_code": e.exit_code()})
            );
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = PipelineConfig::load(cli.config.as_deref())?;
    if cli.lenient {
        config.lenient = true;
    }
    let ctx = StageContext::new(config, cli.force)?;

    let summaries = match cli.command {
        Command::Segment { input, output } => vec![stages::segment::run(&ctx, &input, &output)?],
        Command::Judge {
            input,
            output,
            backend,
            cache_dir,
        } => vec![stages::judge::run(
            &ctx,
            &input,
            &output,
            &JudgeStageOptions {
                cache_dir_override: cache_dir,
                backend_override: backend.map(|b| match b {
                    BackendArg::Scripted => JudgeBackendKind::Scripted,
                    BackendArg::Http => JudgeBackendKind::Http,
                }),
            },
        )?],
        Command::Revise {
            input,
            output,
            rewrite_answer,
        } => vec![stages::revise::run(&ctx, &input, &output, rewrite_answer)?],
        Command::Score {
            input,
            output,
            weighting,
        } => vec![stages::score::run(
            &ctx,
            &input,
            &output,
            weighting.map(|w| match w {
                WeightingArg::TokenWeighted => Weighting::TokenWeighted,
                WeightingArg::Equal => Weighting::Equal,
            }),
        )?],
        Command::Sample {
            input,
            output,
            d,
            epsilon,
            ids,
            audit,
        } => vec![stages::sample::run(
            &ctx,
            &input,
            &output,
            &SampleStageOptions {
                d_override: d,
                epsilon_override: epsilon,
                ids_path: ids,
                audit_path: audit,
            },
        )?],
        Command::Filter {
            input,
            output,
            difficulty,
            rejections,
        } => vec![stages::filter::run(
            &ctx,
            &input,
            &output,
            &FilterStageOptions {
                difficulty_override: difficulty.map(|d| match d {
                    DifficultyArg::Off => DifficultyMode::Off,
                    DifficultyArg::Scripted => DifficultyMode::Scripted,
                    DifficultyArg::Http => DifficultyMode::Http,
                }),
                rejections,
            },
        )?],
        Command::Decontaminate {
            input,
            output,
            benchmarks,
            rejections,
        } => vec![stages::decontaminate::run(
            &ctx,
            &input,
            &output,
            &DecontaminateStageOptions {
                benchmarks_override: benchmarks,
                rejections,
            },
        )?],
        Command::Report {
            input,
            output,
            format,
            baseline,
            view,
        } => vec![stages::report::run(
            &ctx,
            &input,
            &ReportStageOptions {
                output,
                format_override: format.map(|f| match f {
                    FormatArg::Json => ReportFormat::Json,
                    FormatArg::MarkdownTable => ReportFormat::MarkdownTable,
                    FormatArg::Csv => ReportFormat::Csv,
                }),
                view_override: view.map(|v| match v {
                    ViewArg::Original => ReportView::Original,
                    ViewArg::Revised => ReportView::Revised,
                }),
                baseline,
            },
        )?],
        Command::Pipeline { input, out_dir, d } => {
            stages::pipeline::run(&ctx, &input, &out_dir, &PipelineOptions { d_override: d })?
        }
    };
    for summary in &summaries {
        summary.print();
    }
    Ok(())
}

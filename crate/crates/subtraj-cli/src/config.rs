//! Pipeline configuration: one TOML file, flat documented keys, full
//! defaults. CLI flags override config values; secrets come only from
//! environment variables. The resolved config is hashed and the hash is
//! embedded in every stage attachment, so outputs are traceable to the
//! exact configuration that produced them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subtraj_core::corpus::ParseMode;
use subtraj_core::filters::BasicFilterConfig;
use subtraj_core::judge::HttpBackendConfig;
use subtraj_core::report::ReportFormat;
use subtraj_core::scorer::Weighting;
use subtraj_core::segmenter::{Delimiters, MarkerConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeBackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    pub backend: JudgeBackendKind,
    /// Concurrent backend calls during the judge stage.
    pub concurrency: usize,
    /// Empty disables on-disk caching; the in-run memory cache always applies.
    pub cache_dir: String,
    /// Preceding subtrajectories included in each criteria prompt.
    pub context_subtrajectories: usize,
    pub max_prompt_tokens: usize,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    /// Keep raw judge replies in the output corpus (large).
    pub store_raw_output: bool,
    /// Optional template overrides; contents re-version the cache keys.
    pub criteria_template_file: String,
    pub independence_template_file: String,
    pub http: HttpBackendConfig,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            backend: JudgeBackendKind::default(),
            concurrency: 4,
            cache_dir: String::new(),
            context_subtrajectories: 2,
            max_prompt_tokens: 8192,
            max_retries: 3,
            retry_base_ms: 250,
            store_raw_output: false,
            criteria_template_file: String::new(),
            independence_template_file: String::new(),
            http: HttpBackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    #[default]
    Rule,
    Vocab,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub kind: TokenizerKind,
    pub vocab_file: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub weighting: Weighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Target subset size; must be set (config or --d) for the sample stage.
    pub d: usize,
    pub epsilon: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { d: 0, epsilon: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyMode {
    #[default]
    Off,
    Scripted,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverHttpConfig {
    /// Chat-completions endpoints of the two solver models.
    pub endpoints: Vec<String>,
    pub models: Vec<String>,
    pub grader_endpoint: String,
    pub grader_model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiltersConfig {
    pub mixed_language_threshold: f64,
    pub image_phrases: Vec<String>,
    /// Reject records whose solution has no boxed final answer.
    pub require_boxed: bool,
    pub difficulty: DifficultyMode,
    pub attempts_per_solver: usize,
    pub solver_http: SolverHttpConfig,
}

impl Default for FiltersConfig {
    fn default() -> Self {
        let basic = BasicFilterConfig::default();
        FiltersConfig {
            mixed_language_threshold: basic.mixed_language_threshold,
            image_phrases: basic.image_phrases,
            require_boxed: true,
            difficulty: DifficultyMode::Off,
            attempts_per_solver: 2,
            solver_http: SolverHttpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecontaminationConfig {
    pub n: usize,
    /// Benchmark question files (JSONL with "question" and optional "id").
    pub benchmarks: Vec<PathBuf>,
}

impl Default for DecontaminationConfig {
    fn default() -> Self {
        DecontaminationConfig {
            n: 15,
            benchmarks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportView {
    #[default]
    Original,
    Revised,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub format: ReportFormat,
    pub view: ReportView,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReviserConfig {
    /// Rewrite the answer with the revised thinking (for SFT export); the
    /// segmentation and verdict annotations are re-indexed to match.
    pub rewrite_answer: bool,
}

/// The whole pipeline configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Continue past malformed corpus lines instead of aborting.
    pub lenient: bool,
    /// Reserved; the pipeline is deterministic and takes no random draws.
    pub seed: u64,
    pub delimiters: Delimiters,
    pub segmenter: MarkerConfig,
    pub judge: JudgeConfig,
    pub tokenizer: TokenizerConfig,
    pub scorer: ScorerConfig,
    pub sampler: SamplerConfig,
    pub filters: FiltersConfig,
    pub decontamination: DecontaminationConfig,
    pub report: ReportConfig,
    pub reviser: ReviserConfig,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(PipelineConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str(&text).map_err(|e| {
                    CliError::Config(format!("invalid config {}: {e}", path.display()))
                })
            }
        }
    }

    pub fn parse_mode(&self) -> ParseMode {
        if self.lenient {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        }
    }

    pub fn basic_filter_config(&self) -> BasicFilterConfig {
        BasicFilterConfig {
            image_phrases: self.filters.image_phrases.clone(),
            mixed_language_threshold: self.filters.mixed_language_threshold,
            delimiters: self.delimiters.clone(),
        }
    }

    /// SHA-256 of the resolved configuration's canonical TOML rendering.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let rendered = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(rendered.as_bytes()))[..16].to_string()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.segmenter
            .validate()
            .map_err(|e| CliError::Config(format!("segmenter: {e}")))?;
        if self.delimiters.open.is_empty() || self.delimiters.close.is_empty() {
            return Err(CliError::Config("delimiters must be nonempty".into()));
        }
        if self.judge.backend == JudgeBackendKind::Http && self.judge.http.endpoint.is_empty() {
            return Err(CliError::Config(
                "judge.backend = \"http\" requires judge.http.endpoint".into(),
            ));
        }
        if self.tokenizer.kind == TokenizerKind::Vocab && self.tokenizer.vocab_file.is_empty() {
            return Err(CliError::Config(
                "tokenizer.kind = \"vocab\" requires tokenizer.vocab_file".into(),
            ));
        }
        if self.filters.difficulty == DifficultyMode::Http {
            let s = &self.filters.solver_http;
            if s.endpoints.len() != 2 || s.grader_endpoint.is_empty() {
                return Err(CliError::Config(
                    "filters.difficulty = \"http\" requires two solver endpoints and a grader endpoint"
                        .into(),
                ));
            }
        }
        if self.decontamination.n == 0 {
            return Err(CliError::Config("decontamination.n must be at least 1".into()));
        }
        if self.sampler.epsilon.is_nan() || self.sampler.epsilon <= 0.0 {
            return Err(CliError::Config("sampler.epsilon must be positive".into()));
        }
        Ok(())
    }
}

//! The TOML run configuration.
//!
//! ```toml
//! seed = 2025
//! task = "1.1"
//! model = "scbm"
//! persona_mode = "none"
//!
//! [paths]
//! dataset = "data/train.jsonl"
//! splits = "data/splits.json"
//! output_dir = "runs/scbm-1.1"
//!
//! [backend]
//! kind = "mock"
//! ```
//!
//! The backend token is read from the environment variable named by
//! `backend.token_env` (default `SCBM_API_KEY`); it is never accepted here.

use std::path::{Path, PathBuf};

use scbm::models::DecisionRules;
use scbm::pipeline::dataset::FieldMapping;
use scbm::pipeline::train::{ModelKind, TrainConfig};
use scbm::scorer::{HttpBackendConfig, PersonaMode, RetryPolicy};
use scbm::Task;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_TOKEN_ENV: &str = "SCBM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds initialization, shuffling and undersampling.
    pub seed: u64,
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default = "default_persona_mode")]
    pub persona_mode: PersonaMode,
    pub paths: Paths,
    #[serde(default)]
    pub fields: FieldMapping,
    #[serde(default)]
    pub backend: BackendSettings,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub explain: ExplainSettings,
}

fn default_task() -> Task {
    Task::SexismIdentification
}

fn default_model() -> ModelKind {
    ModelKind::Scbm
}

fn default_persona_mode() -> PersonaMode {
    PersonaMode::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub splits: PathBuf,
    pub output_dir: PathBuf,
    /// Lexicon file; the built-in default lexicon when absent.
    pub lexicon: Option<PathBuf>,
    /// Score cache; `<output_dir>/scores.cache` when absent.
    pub cache: Option<PathBuf>,
    /// Sentence embeddings (JSONL), needed by `scbmt`.
    pub embeddings: Option<PathBuf>,
    /// Concept vectors; `<output_dir>/vectors.csv` when absent.
    pub vectors: Option<PathBuf>,
    /// Checkpoint; `<output_dir>/checkpoint.json` when absent.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_id: Option<String>,
    pub top_k: usize,
    pub timeout_secs: u64,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub max_attempts: u32,
    pub concurrency: usize,
    /// Extra affirmative first tokens on top of the defaults.
    pub affirmative_tokens: Option<Vec<String>>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            model_id: None,
            top_k: 20,
            timeout_secs: 60,
            token_env: DEFAULT_TOKEN_ENV.into(),
            max_attempts: retry.max_attempts,
            concurrency: 4,
            affirmative_tokens: None,
        }
    }
}

impl BackendSettings {
    pub fn http_config(&self) -> CliResult<HttpBackendConfig> {
        let missing = |k: &str| CliError::Config(format!("backend.{k} is required for the http backend"));
        Ok(HttpBackendConfig {
            base_url: self.base_url.clone().ok_or_else(|| missing("base_url"))?,
            model_id: self.model_id.clone().ok_or_else(|| missing("model_id"))?,
            top_k: self.top_k,
            timeout_secs: self.timeout_secs,
        })
    }

    /// The bearer token, if the named variable is set and non-empty.
    pub fn token(&self) -> Option<String> {
        std::env::var(&self.token_env).ok().filter(|t| !t.trim().is_empty())
    }
}

/// Optional replacements for the per-model training defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub undersample: Option<String>,
    pub soft_targets: Option<bool>,
    pub multilabel_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub k: usize,
    pub format: String,
    /// Also produce a global entry for NON-SEXIST.
    pub include_negative: bool,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            k: scbm::explain::DEFAULT_TOP_K,
            format: "csv".into(),
            include_negative: false,
        }
    }
}

/// Flag values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub task: Option<Task>,
    pub model: Option<ModelKind>,
    pub persona_mode: Option<PersonaMode>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            config.paths.rebase(dir);
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(task) = o.task {
            self.task = task;
        }
        if let Some(model) = o.model {
            self.model = model;
        }
        if let Some(mode) = o.persona_mode {
            self.persona_mode = mode;
        }
    }

    /// Checks values and that every input path exists.
    pub fn validate(&self) -> CliResult<()> {
        let p = &self.paths;
        let inputs = [Some(&p.dataset), Some(&p.splits), p.lexicon.as_ref(), p.embeddings.as_ref()];
        for path in inputs.into_iter().flatten() {
            if !path.exists() {
                return Err(CliError::Config(format!("`{}` does not exist", path.display())));
            }
        }
        if self.backend.kind == BackendKind::Http {
            self.backend.http_config()?;
        }
        if self.backend.concurrency == 0 || self.backend.max_attempts == 0 {
            return Err(CliError::Config("backend.concurrency and backend.max_attempts must be positive".into()));
        }
        if self.explain.k == 0 {
            return Err(CliError::Config("explain.k must be positive".into()));
        }
        scbm::explain::ReportFormat::parse(&self.explain.format)?;
        self.train_config().validate()?;
        Ok(())
    }

    /// Model defaults for the task, with the `[train]` overrides applied.
    pub fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::defaults(self.model, self.task, self.seed);
        c.persona_mode = self.persona_mode;
        let t = &self.train;
        if let Some(v) = t.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = t.epochs {
            c.epochs = v;
        }
        if let Some(v) = t.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = t.patience {
            c.patience = v;
        }
        if let Some(v) = &t.hidden {
            c.hidden = v.clone();
        }
        if let Some(v) = &t.undersample {
            c.undersample = Some(v.clone());
        }
        if let Some(v) = t.soft_targets {
            c.soft_targets = v;
        }
        if let Some(v) = t.multilabel_threshold {
            c.decision = DecisionRules { multilabel_threshold: v };
        }
        c
    }

    pub fn vectors_path(&self) -> PathBuf {
        self.paths.vectors.clone().unwrap_or_else(|| self.paths.output_dir.join("vectors.csv"))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.paths.cache.clone().unwrap_or_else(|| self.paths.output_dir.join("scores.cache"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths.checkpoint.clone().unwrap_or_else(|| self.paths.output_dir.join("checkpoint.json"))
    }
}

impl Paths {
    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.splits);
        fix(&mut self.output_dir);
        for p in [&mut self.lexicon, &mut self.cache, &mut self.embeddings, &mut self.vectors, &mut self.checkpoint]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }
}

//! Service configuration, read from one TOML file.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! task_pool = "tasks.jsonl"
//! event_log = "events.jsonl"
//! admin_token = "change-me"
//! ab_mode = true
//!
//! [generation]
//! k = 10
//! n_display = 3
//!
//! [[arms]]
//! name = "cra"
//! backend = { kind = "stub", seed = 11 }
//!
//! [[arms]]
//! name = "baseline"
//! input_style = "mask_all"
//! backend = { kind = "http", url = "http://127.0.0.1:9000/suggest", timeout_ms = 5000 }
//! ```
//!
//! Relative paths resolve against the config file's directory.
//! `MILRW_LISTEN` and `MILRW_ADMIN_TOKEN` override the file.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use milrw_core::generation::{GenerationBackend, GenerationConfig, HttpBackend, Lexicon, StubBackend};
use milrw_core::markup::ModelInputStyle;
use milrw_core::session::{Constraints, Task};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path} line {line}: {reason}")]
    TaskPool { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Stub {
        #[serde(default)]
        seed: u64,
        /// Lexicon file; the bundled one when absent.
        #[serde(default)]
        lexicon: Option<PathBuf>,
    },
    Http {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub name: String,
    pub backend: BackendSpec,
    #[serde(default)]
    pub input_style: ModelInputStyle,
}

impl ArmConfig {
    pub fn build_backend(&self) -> Result<Arc<dyn GenerationBackend>, ConfigError> {
        Ok(match &self.backend {
            BackendSpec::Stub { seed, lexicon: None } => Arc::new(StubBackend::new(&self.name, *seed)),
            BackendSpec::Stub { seed, lexicon: Some(path) } => {
                let lex = Lexicon::load(path).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Arc::new(StubBackend::with_lexicon(&self.name, *seed, Arc::new(lex)))
            }
            BackendSpec::Http { url, timeout_ms } => {
                Arc::new(HttpBackend::new(&self.name, url, Duration::from_millis(*timeout_ms)))
            }
        })
    }
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_idle_timeout() -> u64 {
    2 * 60 * 60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub task_pool: PathBuf,
    /// Append-only event log; kept in memory when absent.
    #[serde(default)]
    pub event_log: Option<PathBuf>,
    /// Written after each idle sweep and on shutdown, for `replay-validate`.
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
    /// Admin endpoints answer 401 when no token is set.
    #[serde(default)]
    pub admin_token: Option<String>,
    #[serde(default)]
    pub ab_mode: bool,
    #[serde(default)]
    pub assign_seed: u64,
    #[serde(default = "default_idle_timeout")]
    pub idle_timeout_secs: u64,
    #[serde(default)]
    pub generation: GenerationConfig,
    /// Overrides every task's own constraints when set.
    #[serde(default)]
    pub constraints: Option<Constraints>,
    /// Training pairs used to mix feedback exports.
    #[serde(default)]
    pub base_corpus: Option<PathBuf>,
    /// Vote records folded into the admin report.
    #[serde(default)]
    pub votes: Option<PathBuf>,
    pub arms: Vec<ArmConfig>,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load, resolve relative paths and apply environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.into(), source: e })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.task_pool);
        for p in [&mut self.event_log, &mut self.snapshot, &mut self.base_corpus, &mut self.votes].into_iter().flatten() {
            fix(p);
        }
        for arm in &mut self.arms {
            if let BackendSpec::Stub { lexicon: Some(p), .. } = &mut arm.backend {
                fix(p);
            }
        }
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(listen) = var("MILRW_LISTEN") {
            self.listen = listen;
        }
        if let Some(token) = var("MILRW_ADMIN_TOKEN") {
            self.admin_token = Some(token);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.arms.is_empty() {
            return Err(ConfigError::Invalid("at least one arm is required".into()));
        }
        let mut names = HashSet::new();
        for arm in &self.arms {
            if arm.name.trim().is_empty() {
                return Err(ConfigError::Invalid("arm names must not be empty".into()));
            }
            if !names.insert(arm.name.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate arm {}", arm.name)));
            }
        }
        if self.ab_mode && self.arms.len() != 2 {
            return Err(ConfigError::Invalid(format!("ab_mode needs exactly 2 arms, found {}", self.arms.len())));
        }
        if self.admin_token.as_deref().is_some_and(|t| t.trim().is_empty()) {
            return Err(ConfigError::Invalid("admin_token must not be empty".into()));
        }
        self.generation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Read the task pool, applying the configured constraints.
    pub fn load_tasks(&self) -> Result<Vec<Task>, ConfigError> {
        let mut tasks = read_task_pool(&self.task_pool)?;
        if let Some(c) = self.constraints {
            for t in &mut tasks {
                t.constraints = c;
            }
        }
        Ok(tasks)
    }
}

/// One JSON task per line; blank lines are skipped. Task ids must be unique.
pub fn read_task_pool(path: &Path) -> Result<Vec<Task>, ConfigError> {
    let io = |e| ConfigError::Io { path: path.into(), source: e };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut tasks: Vec<Task> = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| ConfigError::TaskPool { path: path.into(), line: i + 1, reason };
        let task: Task = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if !ids.insert(task.task_id.clone()) {
            return Err(bad(format!("duplicate task id {}", task.task_id)));
        }
        tasks.push(task);
    }
    if tasks.is_empty() {
        return Err(ConfigError::TaskPool { path: path.into(), line: 0, reason: "task pool is empty".into() });
    }
    Ok(tasks)
}

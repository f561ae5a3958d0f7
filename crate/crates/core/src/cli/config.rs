//! Run configuration.
//!
//! One TOML file describes a run. Relative paths are resolved against the
//! directory holding the file, and any key can be overridden with
//! `--set dotted.key=value` (the value is parsed as TOML, falling back to a
//! plain string). Example:
//!
//! ```toml
//! dataset = "tasks.jsonl"
//! output_dir = "runs/demo"
//! methods = ["vanilla", "traver"]
//! levels = ["low", "medium", "high"]
//! seeds = [0]
//! candidates = 5
//!
//! [folds]
//! count = 5
//! seed = 0
//! active = 0
//!
//! [backends.gpt]
//! kind = "openai"
//! base_url = "https://api.openai.com/v1"
//! model = "gpt-4o"
//! api_key_env = "OPENAI_API_KEY"
//!
//! [roles]
//! tutor = "gpt"
//! student = "gpt"
//! manager = "gpt"
//!
//! [scorer]
//! kind = "http"
//! url = "http://localhost:8000/score"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::{DEFAULT_MAX_TURNS, DEFAULT_PARSE_RETRIES};
use crate::backend::{SamplingParams, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, DEFAULT_TOP_P};
use crate::domain::{StudentLevel, TutorMethod};
use crate::error::{Error, Result};
use crate::eval::{
    DEFAULT_CODING_MAX_TOKENS, DEFAULT_COGNITIVE_LOAD_WORDS, DEFAULT_KS, DEFAULT_SAMPLES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<TutorMethod>,
    #[serde(default = "default_levels")]
    pub levels: Vec<StudentLevel>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    /// Candidate tutor utterances per turn (verifier-ranked tutoring).
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default = "default_cognitive_load")]
    pub cognitive_load_words: usize,
    /// Programs generated per coding test.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_test_timeout")]
    pub test_timeout_secs: u64,
    #[serde(default = "default_parse_retries")]
    pub parse_retries: usize,
    #[serde(default)]
    pub label_seed: u64,
    /// Parallel cells. Scripted replay is only deterministic with 1 unless
    /// fixtures are keyed by task.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Candidate counts swept by `scaling`.
    #[serde(default = "default_scaling")]
    pub scaling_candidates: Vec<usize>,
    /// Check at ingest that every reference solution passes its tests.
    #[serde(default = "default_true")]
    pub verify_references: bool,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default = "default_coding_sampling")]
    pub coding: Sampling,
    #[serde(default)]
    pub folds: FoldConfig,
    pub backends: BTreeMap<String, BackendConfig>,
    pub roles: RoleConfig,
    #[serde(default)]
    pub scorer: Option<ScorerConfig>,
    #[serde(default)]
    pub extractor: Option<ExtractorConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl Sampling {
    pub fn params(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            n: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldConfig {
    /// Number of folds; 0 or 1 disables splitting.
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Only tasks of this fold are evaluated.
    #[serde(default)]
    pub active: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Openai {
        base_url: String,
        model: String,
        /// Environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_true")]
        native_n: bool,
        #[serde(default = "default_retries")]
        max_retries: u32,
        #[serde(default = "default_http_timeout")]
        timeout_secs: u64,
    },
    Scripted {
        path: PathBuf,
        #[serde(default = "default_true")]
        native_n: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleConfig {
    pub tutor: String,
    pub student: String,
    pub manager: String,
    /// Defaults to the tutor backend.
    #[serde(default)]
    pub tracer: Option<String>,
    /// Backend writing the coding-test programs; defaults to the student.
    #[serde(default)]
    pub coder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerConfig {
    Scripted {
        path: PathBuf,
        #[serde(default)]
        fallback: Option<f64>,
    },
    Http {
        url: String,
        #[serde(default = "default_http_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_retries")]
        max_retries: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorConfig {
    /// Reads a program on stdin, prints one dotted path per line.
    pub command: String,
}

fn default_methods() -> Vec<TutorMethod> {
    vec![TutorMethod::Vanilla]
}
fn default_levels() -> Vec<StudentLevel> {
    StudentLevel::ALL.to_vec()
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_ratio() -> f64 {
    0.5
}
fn default_max_turns() -> usize {
    DEFAULT_MAX_TURNS
}
fn default_candidates() -> usize {
    5
}
fn default_cognitive_load() -> usize {
    DEFAULT_COGNITIVE_LOAD_WORDS
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_ks() -> Vec<usize> {
    DEFAULT_KS.to_vec()
}
fn default_test_timeout() -> u64 {
    60
}
fn default_parse_retries() -> usize {
    DEFAULT_PARSE_RETRIES
}
fn default_workers() -> usize {
    1
}
fn default_scaling() -> Vec<usize> {
    vec![1, 5, 10, 15, 20]
}
fn default_true() -> bool {
    true
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_top_p() -> f64 {
    DEFAULT_TOP_P
}
fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}
fn default_coding_sampling() -> Sampling {
    Sampling {
        max_tokens: DEFAULT_CODING_MAX_TOKENS,
        ..Sampling::default()
    }
}
fn default_retries() -> u32 {
    3
}
fn default_http_timeout() -> u64 {
    120
}

/// Parses `key=value` into a dotted key path and a TOML value.
fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{spec}` is not key=value")))?;
    let key: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if key.iter().any(String::is_empty) {
        return Err(Error::InvalidConfig(format!(
            "override `{spec}` has an empty key"
        )));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

fn apply_override(root: &mut toml::Table, key: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = key.split_last().expect("override key is non-empty");
    let mut table = root;
    for part in parents {
        let entry = table
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "override {}: `{part}` is not a table",
                key.join(".")
            ))
        })?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for o in overrides {
            let (key, value) = parse_override(o)?;
            apply_override(&mut table, &key, value)?;
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::MissingArtifact {
            path: path.to_path_buf(),
            hint: format!("config file not readable: {e}"),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, overrides)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.output_dir);
        if let Some(p) = &mut self.prompts_dir {
            fix(p);
        }
        for b in self.backends.values_mut() {
            if let BackendConfig::Scripted { path, .. } = b {
                fix(path);
            }
        }
        if let Some(ScorerConfig::Scripted { path, .. }) = &mut self.scorer {
            fix(path);
        }
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                problems.push(msg);
            }
        };
        need(
            !self.methods.is_empty(),
            "methods: at least one method".into(),
        );
        need(!self.levels.is_empty(), "levels: at least one level".into());
        need(!self.seeds.is_empty(), "seeds: at least one seed".into());
        need(
            (0.0..=1.0).contains(&self.ratio),
            format!("ratio: {} outside [0, 1]", self.ratio),
        );
        need(self.max_turns >= 1, "max_turns: must be at least 1".into());
        need(
            self.candidates >= 1,
            "candidates: must be at least 1".into(),
        );
        need(
            self.cognitive_load_words >= 1,
            "cognitive_load_words: must be at least 1".into(),
        );
        need(
            !self.ks.is_empty() && !self.ks.contains(&0),
            "ks: non-empty, positive".into(),
        );
        let max_k = self.ks.iter().copied().max().unwrap_or(0);
        need(
            self.samples >= max_k,
            format!(
                "samples: {} is smaller than the largest k ({max_k})",
                self.samples
            ),
        );
        need(
            self.test_timeout_secs >= 1,
            "test_timeout_secs: must be at least 1".into(),
        );
        need(self.workers >= 1, "workers: must be at least 1".into());
        need(
            !self.scaling_candidates.is_empty() && !self.scaling_candidates.contains(&0),
            "scaling_candidates: non-empty, positive".into(),
        );
        for (name, s) in [("sampling", &self.sampling), ("coding", &self.coding)] {
            if let Err(e) = s.params().validate() {
                need(false, format!("{name}: {e}"));
            }
        }
        if self.folds.count >= 2 {
            if let Some(a) = self.folds.active {
                need(
                    a < self.folds.count,
                    format!(
                        "folds.active: {a} not below folds.count {}",
                        self.folds.count
                    ),
                );
            }
        } else {
            need(
                self.folds.active.is_none(),
                "folds.active: needs folds.count >= 2".into(),
            );
        }
        let mut roles = vec![
            ("roles.tutor", Some(&self.roles.tutor)),
            ("roles.student", Some(&self.roles.student)),
            ("roles.manager", Some(&self.roles.manager)),
            ("roles.tracer", self.roles.tracer.as_ref()),
            ("roles.coder", self.roles.coder.as_ref()),
        ];
        roles.retain(|(_, b)| b.is_some());
        for (field, backend) in roles {
            let backend = backend.expect("retained roles are set");
            need(
                self.backends.contains_key(backend),
                format!("{field}: unknown backend `{backend}`"),
            );
        }
        if self.methods.contains(&TutorMethod::Traver) {
            need(
                self.scorer.is_some(),
                "scorer: required for the traver method".into(),
            );
        }
        if let Some(ScorerConfig::Scripted {
            fallback: Some(f), ..
        }) = &self.scorer
        {
            need(
                (0.0..=1.0).contains(f),
                format!("scorer.fallback: {f} outside [0, 1]"),
            );
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn test_timeout(&self) -> Duration {
        Duration::from_secs(self.test_timeout_secs)
    }
}

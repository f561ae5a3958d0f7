//! Pipeline commands over a run directory.
//!
//! ```text
//! <output_dir>/
//!   dataset/tasks.jsonl, dataset/folds.json
//!   pretest/<task>__<level>__<seed>.json
//!   transcripts/<method>/<task>__<level>__<seed>.jsonl
//!   posttest/<method>/<task>__<level>__<seed>.json
//!   labels/verifier_examples.jsonl, labels/sessions.json
//!   report/results.csv, report/summary.json, report/summary.md
//!   toc/<method>/<cell>.json, toc/toc.csv, toc/toc_mean.csv, toc/toc.svg
//!   scaling/n<N>/{transcripts,posttest}/..., scaling/scaling.csv
//!   manifest.json
//! ```
//!
//! Every per-cell output is written atomically and skipped when it already
//! exists, so an interrupted command can simply be rerun. `manifest.json`
//! maps each file to its SHA-256 after every command.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};
use walkdir::WalkDir;

use super::config::{BackendConfig, RunConfig, ScorerConfig};
use crate::agents::{run_session, PromptTemplates, SessionConfig};
use crate::backend::{
    BackendHandle, BackendRegistry, OpenAiBackend, OpenAiConfig, ScriptedBackend,
};
use crate::domain::{
    sample_student_knowledge, split_folds, Dataset, FoldAssignment, StudentLevel, StudentProfile,
    TaskEntry, TokenUsage, Transcript, TutorMethod,
};
use crate::error::{Error, Result};
use crate::eval::{
    build_report, mean_curves, results_csv, run_unit_tests, toc_csv, toc_svg, CodingTestConfig,
    CodingTestResult, CodingTestRunner, CommandExtractor, DependencyExtractor, LexicalExtractor,
    SessionCurve, TestCache, PRETEST_METHOD,
};
use crate::reward::{
    label_sessions, HttpScorer, LabeledSession, Scorer, ScriptedScorer, SessionOutcome,
};

/// What a command did, for the console.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandSummary {
    pub written: usize,
    pub skipped: usize,
    pub notes: Vec<String>,
}

impl CommandSummary {
    fn merge(&mut self, other: CommandSummary) {
        self.written += other.written;
        self.skipped += other.skipped;
        self.notes.extend(other.notes);
    }
}

/// One (task, level, seed) evaluation unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cell {
    pub task_id: String,
    pub level: StudentLevel,
    pub seed: u64,
}

impl Cell {
    pub fn file_stem(&self) -> String {
        let safe: String = self
            .task_id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        format!("{safe}__{}__{}", self.level, self.seed)
    }
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset/tasks.jsonl")
    }

    pub fn folds(&self) -> PathBuf {
        self.root.join("dataset/folds.json")
    }

    pub fn pretest(&self, cell: &Cell) -> PathBuf {
        self.root
            .join("pretest")
            .join(format!("{}.json", cell.file_stem()))
    }

    pub fn transcript(&self, method: TutorMethod, cell: &Cell) -> PathBuf {
        self.root
            .join("transcripts")
            .join(method.as_str())
            .join(format!("{}.jsonl", cell.file_stem()))
    }

    pub fn posttest(&self, method: TutorMethod, cell: &Cell) -> PathBuf {
        self.root
            .join("posttest")
            .join(method.as_str())
            .join(format!("{}.json", cell.file_stem()))
    }

    pub fn toc(&self, method: TutorMethod, cell: &Cell) -> PathBuf {
        self.root
            .join("toc")
            .join(method.as_str())
            .join(format!("{}.json", cell.file_stem()))
    }

    pub fn labels(&self) -> PathBuf {
        self.root.join("labels/verifier_examples.jsonl")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }

    /// Sub-run for one candidate count of the scaling sweep.
    pub fn scaling(&self, candidates: usize) -> RunDir {
        RunDir::new(self.root.join("scaling").join(format!("n{candidates:02}")))
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)
        .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent)
        .map_err(|e| Error::io(format!("creating temp file in {}", parent.display()), e))?;
    tmp.write_all(bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(format!("serializing {}", path.display()), e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path, hint: &str) -> Result<T> {
    let text = read_artifact(path, hint)?;
    serde_json::from_str(&text).map_err(|e| Error::json(format!("parsing {}", path.display()), e))
}

fn read_artifact(path: &Path, hint: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|_| Error::MissingArtifact {
        path: path.to_path_buf(),
        hint: hint.to_string(),
    })
}

fn read_transcript(path: &Path) -> Result<Transcript> {
    let file = fs::File::open(path).map_err(|_| Error::MissingArtifact {
        path: path.to_path_buf(),
        hint: "run `tutorbench simulate` first".into(),
    })?;
    Transcript::read_jsonl(BufReader::new(file))
}

/// Rewrites `manifest.json` with the hash of every other file in the run.
pub fn write_manifest(dir: &RunDir) -> Result<()> {
    let mut files = BTreeMap::new();
    for entry in WalkDir::new(&dir.root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::io("walking run directory", e.into()))?;
        if !entry.file_type().is_file() || entry.path() == dir.manifest() {
            continue;
        }
        let bytes = fs::read(entry.path())
            .map_err(|e| Error::io(format!("reading {}", entry.path().display()), e))?;
        let rel = entry
            .path()
            .strip_prefix(&dir.root)
            .unwrap_or(entry.path())
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        let digest: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        files.insert(rel, digest);
    }
    write_json(&dir.manifest(), &serde_json::json!({ "files": files }))
}

/// Everything downstream commands need, loaded from the config and the
/// ingested dataset.
pub struct Workspace {
    pub config: RunConfig,
    pub dir: RunDir,
    pub dataset: Dataset,
    pub folds: FoldAssignment,
    pub templates: PromptTemplates,
}

impl Workspace {
    pub fn open(config: RunConfig) -> Result<Self> {
        let dir = RunDir::new(&config.output_dir);
        let hint = "run `tutorbench ingest` first";
        let dataset = Dataset::parse_jsonl(&read_artifact(&dir.dataset(), hint)?, None)?;
        let folds: FoldAssignment = read_json(&dir.folds(), hint)?;
        let templates = match &config.prompts_dir {
            Some(p) => PromptTemplates::from_dir(p)?,
            None => PromptTemplates::default(),
        };
        Ok(Self {
            config,
            dir,
            dataset,
            folds,
            templates,
        })
    }

    /// Tasks under evaluation: the active fold, or every task.
    pub fn active_tasks(&self) -> Vec<&TaskEntry> {
        match self.config.folds.active {
            Some(fold) => {
                let ids: BTreeSet<&str> = self
                    .folds
                    .tasks_in(fold)
                    .iter()
                    .map(String::as_str)
                    .collect();
                self.dataset
                    .entries
                    .iter()
                    .filter(|e| ids.contains(e.task.task_id.as_str()))
                    .collect()
            }
            None => self.dataset.entries.iter().collect(),
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for entry in self.active_tasks() {
            for &level in &self.config.levels {
                for &seed in &self.config.seeds {
                    cells.push(Cell {
                        task_id: entry.task.task_id.clone(),
                        level,
                        seed,
                    });
                }
            }
        }
        cells
    }

    fn entry(&self, cell: &Cell) -> &TaskEntry {
        self.dataset
            .get(&cell.task_id)
            .expect("cells are built from dataset tasks")
    }

    fn profile(&self, cell: &Cell) -> Result<StudentProfile> {
        sample_student_knowledge(
            &self.entry(cell).knowledge,
            cell.level,
            self.config.ratio,
            cell.seed,
        )
    }

    fn session_config(&self, method: TutorMethod, candidates: usize) -> SessionConfig {
        let p = self.config.sampling.params();
        SessionConfig {
            method,
            max_turns: self.config.max_turns,
            candidates,
            tutor_params: p,
            student_params: p,
            manager_params: p,
            tracer_params: p,
            parse_retries: self.config.parse_retries,
        }
    }

    fn coding_config(&self) -> CodingTestConfig {
        CodingTestConfig {
            n: self.config.samples,
            ks: self.config.ks.clone(),
            params: self.config.coding.params(),
            timeout: self.config.test_timeout(),
            cognitive_load_words: self.config.cognitive_load_words,
        }
    }

    /// Runs `f` over `items` with the configured worker budget, preserving
    /// input order in the results.
    fn parallel<T: Sync, R: Send>(
        &self,
        items: &[T],
        f: impl Fn(&T) -> Result<R> + Sync + Send,
    ) -> Result<Vec<R>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("workers: {e}")))?;
        pool.install(|| items.par_iter().map(&f).collect::<Vec<_>>())
            .into_iter()
            .collect()
    }
}

/// Backends, scorer and extractor instantiated from the config.
pub struct Agents {
    pub registry: BackendRegistry,
    pub coder: BackendHandle,
    pub scorer: Option<Box<dyn Scorer>>,
    pub extractor: Box<dyn DependencyExtractor>,
}

pub fn build_agents(config: &RunConfig) -> Result<Agents> {
    let mut handles: BTreeMap<&str, BackendHandle> = BTreeMap::new();
    for (name, spec) in &config.backends {
        let handle = match spec {
            BackendConfig::Openai {
                base_url,
                model,
                api_key_env,
                native_n,
                max_retries,
                timeout_secs,
            } => {
                let mut c = OpenAiConfig::new(base_url, model);
                c.native_n = *native_n;
                c.max_retries = *max_retries;
                c.timeout = std::time::Duration::from_secs(*timeout_secs);
                if let Some(var) = api_key_env {
                    c.api_key = Some(std::env::var(var).map_err(|_| {
                        Error::EnvMissing(format!(
                            "backend {name}: environment variable {var} is not set"
                        ))
                    })?);
                }
                BackendHandle::new(OpenAiBackend::new(name, c)?)
            }
            BackendConfig::Scripted { path, native_n } => {
                let b = ScriptedBackend::load(name, path)?;
                BackendHandle::from_arc(Arc::new(if *native_n { b } else { b.without_native_n() }))
            }
        };
        handles.insert(name, handle);
    }
    let get = |name: &str| {
        handles
            .get(name)
            .cloned()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown backend `{name}`")))
    };
    let roles = &config.roles;
    let mut registry = BackendRegistry::new(
        get(&roles.tutor)?,
        get(&roles.student)?,
        get(&roles.manager)?,
    );
    if let Some(t) = &roles.tracer {
        registry = registry.with_tracer(get(t)?);
    }
    let coder = get(roles.coder.as_deref().unwrap_or(&roles.student))?;
    let scorer: Option<Box<dyn Scorer>> = match &config.scorer {
        None => None,
        Some(ScorerConfig::Scripted { path, fallback }) => {
            let s = ScriptedScorer::load(path)?;
            Some(Box::new(match fallback {
                Some(f) => s.with_fallback(*f),
                None => s,
            }))
        }
        Some(ScorerConfig::Http {
            url,
            timeout_secs,
            max_retries,
        }) => Some(Box::new(HttpScorer::new(
            url,
            std::time::Duration::from_secs(*timeout_secs),
            *max_retries,
        )?)),
    };
    let extractor: Box<dyn DependencyExtractor> = match &config.extractor {
        Some(e) => Box::new(CommandExtractor {
            command: e.command.clone(),
        }),
        None => Box::new(LexicalExtractor),
    };
    Ok(Agents {
        registry,
        coder,
        scorer,
        extractor,
    })
}

/// Validates the dataset, checks reference solutions, and writes the
/// normalized dataset and the fold assignment into the run directory.
pub fn cmd_ingest(config: &RunConfig) -> Result<CommandSummary> {
    if !config.dataset.exists() {
        return Err(Error::MissingArtifact {
            path: config.dataset.clone(),
            hint: "dataset file named by `dataset` in the config".into(),
        });
    }
    let dataset = Dataset::load(&config.dataset)?;
    if dataset.entries.is_empty() {
        return Err(Error::InvalidSpec("dataset has no tasks".into()));
    }
    let mut summary = CommandSummary::default();
    if config.verify_references {
        let mut failing = Vec::new();
        for entry in &dataset.entries {
            let Some(reference) = &entry.task.reference_solution else {
                summary.notes.push(format!(
                    "task {} has no reference solution to check",
                    entry.task.task_id
                ));
                continue;
            };
            let outcome = run_unit_tests(&entry.task, reference, config.test_timeout())?;
            if !outcome.passed {
                failing.push(format!("{} ({:?})", entry.task.task_id, outcome.cause));
            }
        }
        if !failing.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "reference solutions fail their own tests: {}",
                failing.join(", ")
            )));
        }
    }
    let folds = if config.folds.count >= 2 {
        FoldAssignment::from_folds(split_folds(
            &dataset.tasks(),
            config.folds.count,
            config.folds.seed,
        )?)
    } else {
        let mut ids: Vec<String> = dataset
            .entries
            .iter()
            .map(|e| e.task.task_id.clone())
            .collect();
        ids.sort();
        FoldAssignment::from_folds(vec![ids])
    };
    let dir = RunDir::new(&config.output_dir);
    write_atomic(&dir.dataset(), dataset.to_jsonl().as_bytes())?;
    write_json(&dir.folds(), &folds)?;
    summary.written = 2;
    write_manifest(&dir)?;
    info!(
        tasks = dataset.entries.len(),
        folds = folds.0.len(),
        "dataset ingested"
    );
    Ok(summary)
}

pub fn cmd_pretest(config: &RunConfig) -> Result<CommandSummary> {
    let ws = Workspace::open(config.clone())?;
    let agents = build_agents(config)?;
    let cache = TestCache::new();
    let coding = ws.coding_config();
    let runner = CodingTestRunner {
        backend: &agents.coder,
        templates: &ws.templates,
        extractor: agents.extractor.as_ref(),
        cache: &cache,
        config: &coding,
    };
    let cells = ws.cells();
    let done = ws.parallel(&cells, |cell| {
        let path = ws.dir.pretest(cell);
        if path.exists() {
            return Ok(false);
        }
        let entry = ws.entry(cell);
        let result = runner.pretest(&entry.task, &entry.knowledge, &ws.profile(cell)?)?;
        write_json(&path, &result)?;
        Ok(true)
    })?;
    finish(&ws.dir, &done)
}

fn finish(dir: &RunDir, done: &[bool]) -> Result<CommandSummary> {
    write_manifest(dir)?;
    Ok(CommandSummary {
        written: done.iter().filter(|&&d| d).count(),
        skipped: done.iter().filter(|&&d| !d).count(),
        notes: Vec::new(),
    })
}

fn simulate_into(
    ws: &Workspace,
    agents: &Agents,
    dir: &RunDir,
    method: TutorMethod,
    candidates: usize,
) -> Result<CommandSummary> {
    let session = ws.session_config(method, candidates);
    let cells = ws.cells();
    let outcomes = ws.parallel(&cells, |cell| {
        let path = dir.transcript(method, cell);
        if path.exists() {
            return Ok((false, None));
        }
        let entry = ws.entry(cell);
        let transcript = run_session(
            &agents.registry,
            agents.scorer.as_deref(),
            &ws.templates,
            &session,
            &entry.task,
            &entry.knowledge,
            &ws.profile(cell)?,
        )?;
        let note = transcript
            .abort_reason
            .as_ref()
            .map(|r| format!("{} {}: aborted: {r}", method, cell.file_stem()));
        write_atomic(&path, transcript.to_jsonl_string().as_bytes())?;
        Ok((true, note))
    })?;
    let mut summary = CommandSummary::default();
    for (written, note) in outcomes {
        if written {
            summary.written += 1;
        } else {
            summary.skipped += 1;
        }
        summary.notes.extend(note);
    }
    Ok(summary)
}

pub fn cmd_simulate(config: &RunConfig) -> Result<CommandSummary> {
    let ws = Workspace::open(config.clone())?;
    let agents = build_agents(config)?;
    let mut summary = CommandSummary::default();
    for &method in &config.methods {
        summary.merge(simulate_into(
            &ws,
            &agents,
            &ws.dir,
            method,
            config.candidates,
        )?);
    }
    write_manifest(&ws.dir)?;
    Ok(summary)
}

fn posttest_into(
    ws: &Workspace,
    agents: &Agents,
    dir: &RunDir,
    method: TutorMethod,
) -> Result<CommandSummary> {
    let cache = TestCache::new();
    let coding = ws.coding_config();
    let runner = CodingTestRunner {
        backend: &agents.coder,
        templates: &ws.templates,
        extractor: agents.extractor.as_ref(),
        cache: &cache,
        config: &coding,
    };
    let cells = ws.cells();
    let outcomes = ws.parallel(&cells, |cell| {
        let path = dir.posttest(method, cell);
        if path.exists() {
            return Ok((false, None));
        }
        let transcript = read_transcript(&dir.transcript(method, cell))?;
        if transcript.turns.is_empty() {
            return Ok((
                false,
                Some(format!(
                    "{method} {}: no turns, post-test skipped",
                    cell.file_stem()
                )),
            ));
        }
        let entry = ws.entry(cell);
        let result = runner.posttest(&entry.task, &entry.knowledge, &transcript)?;
        write_json(&path, &result)?;
        Ok((true, None))
    })?;
    let mut summary = CommandSummary::default();
    for (written, note) in outcomes {
        if written {
            summary.written += 1;
        } else {
            summary.skipped += 1;
        }
        summary.notes.extend(note);
    }
    Ok(summary)
}

pub fn cmd_posttest(config: &RunConfig) -> Result<CommandSummary> {
    let ws = Workspace::open(config.clone())?;
    let agents = build_agents(config)?;
    let mut summary = CommandSummary::default();
    for &method in &config.methods {
        summary.merge(posttest_into(&ws, &agents, &ws.dir, method)?);
    }
    write_manifest(&ws.dir)?;
    Ok(summary)
}

/// Post-test result of a cell, or `None` when its transcript has no turns.
fn load_posttest(
    dir: &RunDir,
    method: TutorMethod,
    cell: &Cell,
) -> Result<Option<CodingTestResult>> {
    let path = dir.posttest(method, cell);
    if path.exists() {
        return read_json(&path, "run `tutorbench posttest` first").map(Some);
    }
    let transcript = read_transcript(&dir.transcript(method, cell))?;
    if transcript.turns.is_empty() {
        return Ok(None);
    }
    Err(Error::MissingArtifact {
        path,
        hint: "run `tutorbench posttest` first".into(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionsIndex {
    positive: Vec<String>,
    negative: Vec<String>,
    dropped: Vec<String>,
}

/// Exports verifier training examples. A session counts as successful when
/// at least one post-test program passes.
pub fn cmd_label(config: &RunConfig) -> Result<CommandSummary> {
    let ws = Workspace::open(config.clone())?;
    let mut loaded = Vec::new();
    for &method in &config.methods {
        for cell in ws.cells() {
            let Some(post) = load_posttest(&ws.dir, method, &cell)? else {
                continue;
            };
            let transcript = read_transcript(&ws.dir.transcript(method, &cell))?;
            loaded.push((
                format!("{method}/{}", cell.file_stem()),
                cell,
                transcript,
                post.passes() >= 1,
            ));
        }
    }
    let sessions: Vec<LabeledSession<'_>> = loaded
        .iter()
        .map(|(id, cell, transcript, success)| LabeledSession {
            session_id: id,
            task: &ws.entry(cell).task,
            transcript,
            post_test_success: *success,
        })
        .collect();
    let set = label_sessions(&sessions, &SessionOutcome, config.label_seed)?;
    let mut buf = Vec::new();
    set.write_jsonl(&mut buf)?;
    write_atomic(&ws.dir.labels(), &buf)?;
    write_json(
        &ws.dir.root.join("labels/sessions.json"),
        &SessionsIndex {
            positive: set.positive_sessions.clone(),
            negative: set.negative_sessions.clone(),
            dropped: set.dropped_sessions.clone(),
        },
    )?;
    write_manifest(&ws.dir)?;
    Ok(CommandSummary {
        written: 2,
        skipped: 0,
        notes: vec![format!(
            "{} examples from {} positive and {} negative sessions",
            set.examples.len(),
            set.positive_sessions.len(),
            set.negative_sessions.len()
        )],
    })
}

pub fn cmd_report(config: &RunConfig) -> Result<CommandSummary> {
    let ws = Workspace::open(config.clone())?;
    let cells = ws.cells();
    let mut pre = Vec::new();
    for cell in &cells {
        pre.push(read_json::<CodingTestResult>(
            &ws.dir.pretest(cell),
            "run `tutorbench pretest` first",
        )?);
    }
    let mut post: BTreeMap<String, Vec<CodingTestResult>> = BTreeMap::new();
    for &method in &config.methods {
        let results = post.entry(method.to_string()).or_default();
        for cell in &cells {
            results.extend(load_posttest(&ws.dir, method, cell)?);
        }
    }
    let folds = (config.folds.count >= 2).then_some(&ws.folds);
    let report = build_report(&pre, &post, folds)?;

    let mut rows: Vec<(&str, &CodingTestResult)> =
        pre.iter().map(|r| (PRETEST_METHOD, r)).collect();
    for (method, results) in &post {
        rows.extend(results.iter().map(|r| (method.as_str(), r)));
    }
    let dir = ws.dir.report();
    write_atomic(&dir.join("results.csv"), results_csv(&rows)?.as_bytes())?;
    write_json(&dir.join("summary.json"), &report)?;
    write_atomic(&dir.join("summary.md"), report.to_markdown().as_bytes())?;
    write_manifest(&ws.dir)?;
    Ok(CommandSummary {
        written: 3,
        skipped: 0,
        notes: vec![report.to_markdown()],
    })
}

pub fn cmd_toc(config: &RunConfig) -> Result<CommandSummary> {
    let ws = Workspace::open(config.clone())?;
    let agents = build_agents(config)?;
    let cache = TestCache::new();
    let coding = ws.coding_config();
    let runner = CodingTestRunner {
        backend: &agents.coder,
        templates: &ws.templates,
        extractor: agents.extractor.as_ref(),
        cache: &cache,
        config: &coding,
    };
    let cells = ws.cells();
    let mut summary = CommandSummary::default();
    let mut curves = Vec::new();
    for &method in &config.methods {
        let results = ws.parallel(&cells, |cell| {
            let path = ws.dir.toc(method, cell);
            if path.exists() {
                return Ok((false, Some(read_json::<SessionCurve>(&path, "")?)));
            }
            let transcript = read_transcript(&ws.dir.transcript(method, cell))?;
            if transcript.turns.is_empty() {
                return Ok((false, None));
            }
            let entry = ws.entry(cell);
            let curve = SessionCurve {
                method: method.to_string(),
                task_id: cell.task_id.clone(),
                level: cell.level,
                seed: cell.seed,
                points: runner.outcome_curve(&entry.task, &entry.knowledge, &transcript)?,
            };
            write_json(&path, &curve)?;
            Ok((true, Some(curve)))
        })?;
        for (written, curve) in results {
            if written {
                summary.written += 1;
            } else {
                summary.skipped += 1;
            }
            curves.extend(curve);
        }
    }
    let gaps = curves
        .iter()
        .flat_map(|c| &c.points)
        .filter(|p| p.outcome.is_none())
        .count();
    if gaps > 0 {
        summary
            .notes
            .push(format!("{gaps} curve points failed and are gaps"));
    }
    let means = mean_curves(&curves);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(["method", "turn", "recall", "pass"])
        .map_err(csv_err)?;
    for (method, series) in &means {
        for (t, point) in series.iter().enumerate() {
            let (r, p) = point.map_or((String::new(), String::new()), |o| {
                (format!("{:.6}", o.recall), format!("{:.6}", o.pass))
            });
            w.write_record([method.clone(), (t + 1).to_string(), r, p])
                .map_err(csv_err)?;
        }
    }
    let means_csv = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    let dir = ws.dir.root.join("toc");
    write_atomic(&dir.join("toc.csv"), toc_csv(&curves)?.as_bytes())?;
    write_atomic(&dir.join("toc_mean.csv"), &means_csv)?;
    write_atomic(&dir.join("toc.svg"), toc_svg(&means).as_bytes())?;
    write_manifest(&ws.dir)?;
    Ok(summary)
}

/// One line of the candidate-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub candidates: usize,
    pub sessions: usize,
    /// Mean post-test Pass over sessions, in percent.
    pub pass: f64,
    pub recall: f64,
    /// Tutor generation plus knowledge tracing.
    pub tutor_tokens_per_session: f64,
    /// Every dialogue role, coding tests excluded.
    pub total_tokens_per_session: f64,
    pub total_tokens: u64,
}

/// Reruns verifier-ranked tutoring for each candidate count with fresh
/// backends, post-tests every session, and tabulates outcome against
/// tokens spent.
pub fn cmd_scaling(
    config: &RunConfig,
    candidates: Option<&[usize]>,
) -> Result<(CommandSummary, Vec<ScalingRow>)> {
    let ws = Workspace::open(config.clone())?;
    let ns: Vec<usize> =
        candidates.map_or_else(|| config.scaling_candidates.clone(), <[usize]>::to_vec);
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::InvalidConfig(
            "scaling: candidate counts must be positive".into(),
        ));
    }
    if config.scorer.is_none() {
        return Err(Error::InvalidConfig(
            "scorer: required for the scaling sweep".into(),
        ));
    }
    let method = TutorMethod::Traver;
    let mut summary = CommandSummary::default();
    let mut rows = Vec::new();
    for &n in &ns {
        let agents = build_agents(config)?;
        let dir = ws.dir.scaling(n);
        summary.merge(simulate_into(&ws, &agents, &dir, method, n)?);
        summary.merge(posttest_into(&ws, &agents, &dir, method)?);

        let mut sessions = 0usize;
        let (mut tutor, mut total) = (TokenUsage::default(), TokenUsage::default());
        let (mut pass, mut recall) = (0.0, 0.0);
        for cell in ws.cells() {
            let transcript = read_transcript(&dir.transcript(method, &cell))?;
            sessions += 1;
            tutor += transcript.tutor_usage();
            total += transcript.total_usage();
            if let Some(post) = load_posttest(&dir, method, &cell)? {
                let o = post.outcome()?;
                pass += o.pass;
                recall += o.recall;
            }
        }
        let per = |v: f64| {
            if sessions == 0 {
                0.0
            } else {
                v / sessions as f64
            }
        };
        rows.push(ScalingRow {
            candidates: n,
            sessions,
            pass: 100.0 * per(pass),
            recall: 100.0 * per(recall),
            tutor_tokens_per_session: per(tutor.total() as f64),
            total_tokens_per_session: per(total.total() as f64),
            total_tokens: total.total(),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row)
            .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    write_atomic(&ws.dir.root.join("scaling/scaling.csv"), &bytes)?;
    write_manifest(&ws.dir)?;
    if rows
        .windows(2)
        .any(|w| w[1].tutor_tokens_per_session < w[0].tutor_tokens_per_session)
    {
        warn!("tutor tokens per session did not grow with the candidate count");
    }
    Ok((summary, rows))
}

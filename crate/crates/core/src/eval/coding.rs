//! Pre-test, post-test and per-turn coding evaluations of the simulated
//! student.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::deps::{extract_dependencies, DependencyExtractor};
use super::metrics::{
    mean_over_ks, pass_at_k, recall_at_k, TutoringOutcome, DEFAULT_KS, DEFAULT_SAMPLES,
};
use super::sandbox::{TestCache, TestCause, TestOutcome, DEFAULT_TEST_TIMEOUT};
use super::text::{extract_code, truncate_cognitive_load, DEFAULT_COGNITIVE_LOAD_WORDS};
use crate::agents::{render_dialogue, PromptTemplates};
use crate::backend::{BackendHandle, CallContext, CallRole, ChatMessage, SamplingParams};
use crate::domain::{
    CodingTask, DialogueTurn, KnowledgeSpec, StudentLevel, StudentProfile, TokenUsage, Transcript,
};
use crate::error::{Error, Result};

/// Completion budget for coding tests. Dialogue utterances use a much
/// smaller limit, which would cut most programs short.
pub const DEFAULT_CODING_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
    /// Post-test on the dialogue prefix ending at this turn.
    Toc(usize),
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Pre => f.write_str("pre"),
            Phase::Post => f.write_str("post"),
            Phase::Toc(t) => write!(f, "toc:{t}"),
        }
    }
}

/// Pre-test conversation: prior knowledge, task, and the direct-completion
/// instruction.
pub fn build_pretest_prompt(
    templates: &PromptTemplates,
    task: &CodingTask,
    profile: &StudentProfile,
    spec: &KnowledgeSpec,
) -> Vec<ChatMessage> {
    vec![ChatMessage::system(
        templates.coding_test(task, profile, spec, None),
    )]
}

/// The dialogue as the student recalls it: each tutor utterance cut to its
/// last `max_words` words, student utterances verbatim.
pub fn recalled_dialogue(turns: &[DialogueTurn], max_words: usize) -> String {
    let tutor: Vec<String> = turns
        .iter()
        .map(|t| truncate_cognitive_load(&t.tutor_utterance, max_words))
        .collect();
    render_dialogue(
        tutor
            .iter()
            .zip(turns)
            .map(|(r, t)| (r.as_str(), t.student_utterance.as_str())),
    )
}

/// Post-test conversation over `turns` (a whole transcript or a prefix).
pub fn build_posttest_prompt(
    templates: &PromptTemplates,
    task: &CodingTask,
    profile: &StudentProfile,
    spec: &KnowledgeSpec,
    turns: &[DialogueTurn],
    max_words: usize,
) -> Vec<ChatMessage> {
    let dialogue = recalled_dialogue(turns, max_words);
    vec![ChatMessage::system(templates.coding_test(
        task,
        profile,
        spec,
        Some(&dialogue),
    ))]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingTestResult {
    pub task_id: String,
    pub level: StudentLevel,
    pub seed: u64,
    pub phase: Phase,
    pub n: usize,
    pub ks: Vec<usize>,
    /// Extracted programs; empty when the completion held no code.
    pub programs: Vec<String>,
    pub pass_vector: Vec<bool>,
    pub causes: Vec<TestCause>,
    /// Per program, the reference dependencies it uses.
    pub extracted_deps: Vec<BTreeSet<String>>,
    pub reference_deps: Vec<String>,
    pub usage: TokenUsage,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerKMetrics {
    pub recall: BTreeMap<usize, f64>,
    pub pass: BTreeMap<usize, f64>,
}

impl CodingTestResult {
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.programs.len() != n
            || self.pass_vector.len() != n
            || self.causes.len() != n
            || self.extracted_deps.len() != n
        {
            return Err(Error::InvalidInput(format!(
                "task {}: result vectors do not all have length n={n}",
                self.task_id
            )));
        }
        if self.ks.iter().any(|&k| k == 0 || k > n) {
            return Err(Error::InvalidInput(format!(
                "task {}: ks {:?} not within 1..={n}",
                self.task_id, self.ks
            )));
        }
        Ok(())
    }

    pub fn passes(&self) -> usize {
        self.pass_vector.iter().filter(|&&p| p).count()
    }

    pub fn pass_at(&self, k: usize) -> Result<f64> {
        pass_at_k(self.n, self.passes(), k)
    }

    pub fn recall_at(&self, k: usize) -> Result<f64> {
        let reference: BTreeSet<String> = self.reference_deps.iter().cloned().collect();
        recall_at_k(&self.extracted_deps, &reference, k)
    }

    pub fn metrics(&self) -> Result<PerKMetrics> {
        let mut out = PerKMetrics {
            recall: BTreeMap::new(),
            pass: BTreeMap::new(),
        };
        for &k in &self.ks {
            out.recall.insert(k, self.recall_at(k)?);
            out.pass.insert(k, self.pass_at(k)?);
        }
        Ok(out)
    }

    /// Recall and Pass averaged over the evaluated k values, in [0, 1].
    pub fn outcome(&self) -> Result<TutoringOutcome> {
        let m = self.metrics()?;
        Ok(TutoringOutcome {
            recall: mean_over_ks(&m.recall, &self.ks)?,
            pass: mean_over_ks(&m.pass, &self.ks)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingTestConfig {
    pub n: usize,
    pub ks: Vec<usize>,
    pub params: SamplingParams,
    pub timeout: Duration,
    pub cognitive_load_words: usize,
}

impl Default for CodingTestConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_SAMPLES,
            ks: DEFAULT_KS.to_vec(),
            params: SamplingParams {
                max_tokens: DEFAULT_CODING_MAX_TOKENS,
                ..SamplingParams::default()
            },
            timeout: DEFAULT_TEST_TIMEOUT,
            cognitive_load_words: DEFAULT_COGNITIVE_LOAD_WORDS,
        }
    }
}

impl CodingTestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::InvalidConfig(
                "ks must be non-empty and positive".into(),
            ));
        }
        let max_k = *self.ks.iter().max().unwrap_or(&1);
        if self.n < max_k {
            return Err(Error::InvalidConfig(format!(
                "n={} is smaller than the largest k={max_k}",
                self.n
            )));
        }
        if self.cognitive_load_words == 0 {
            return Err(Error::InvalidConfig(
                "cognitive_load_words must be at least 1".into(),
            ));
        }
        self.params.validate()
    }
}

pub struct CodingTestRunner<'a> {
    pub backend: &'a BackendHandle,
    pub templates: &'a PromptTemplates,
    pub extractor: &'a dyn DependencyExtractor,
    pub cache: &'a TestCache,
    pub config: &'a CodingTestConfig,
}

impl CodingTestRunner<'_> {
    pub fn pretest(
        &self,
        task: &CodingTask,
        spec: &KnowledgeSpec,
        profile: &StudentProfile,
    ) -> Result<CodingTestResult> {
        let messages = build_pretest_prompt(self.templates, task, profile, spec);
        let call = CallContext::new(CallRole::Pretest, 0, &task.task_id).with_level(profile.level);
        self.evaluate(task, spec, profile, Phase::Pre, &call, &messages)
    }

    pub fn posttest(
        &self,
        task: &CodingTask,
        spec: &KnowledgeSpec,
        transcript: &Transcript,
    ) -> Result<CodingTestResult> {
        if transcript.turns.is_empty() {
            return Err(Error::InvalidInput(format!(
                "task {}: post-test needs a non-empty transcript",
                task.task_id
            )));
        }
        self.after_turns(
            task,
            spec,
            &transcript.profile,
            &transcript.turns,
            Phase::Post,
        )
    }

    fn after_turns(
        &self,
        task: &CodingTask,
        spec: &KnowledgeSpec,
        profile: &StudentProfile,
        turns: &[DialogueTurn],
        phase: Phase,
    ) -> Result<CodingTestResult> {
        let messages = build_posttest_prompt(
            self.templates,
            task,
            profile,
            spec,
            turns,
            self.config.cognitive_load_words,
        );
        let call = CallContext::new(CallRole::Posttest, turns.len(), &task.task_id)
            .with_level(profile.level);
        self.evaluate(task, spec, profile, phase, &call, &messages)
    }

    /// Post-test after every prefix of the transcript. A prefix whose
    /// evaluation fails becomes a gap in the series.
    pub fn outcome_curve(
        &self,
        task: &CodingTask,
        spec: &KnowledgeSpec,
        transcript: &Transcript,
    ) -> Result<Vec<TocPoint>> {
        if transcript.turns.is_empty() {
            return Err(Error::InvalidInput(format!(
                "task {}: outcome curve needs a non-empty transcript",
                task.task_id
            )));
        }
        let mut points = Vec::with_capacity(transcript.turns.len());
        for t in 1..=transcript.turns.len() {
            let result = self
                .after_turns(
                    task,
                    spec,
                    &transcript.profile,
                    &transcript.turns[..t],
                    Phase::Toc(t),
                )
                .and_then(|r| r.outcome());
            points.push(match result {
                Ok(outcome) => TocPoint {
                    turn: t,
                    outcome: Some(outcome),
                    error: None,
                },
                Err(e) => {
                    warn!(task = %task.task_id, turn = t, error = %e, "outcome curve gap");
                    TocPoint {
                        turn: t,
                        outcome: None,
                        error: Some(e.to_string()),
                    }
                }
            });
        }
        Ok(points)
    }

    fn evaluate(
        &self,
        task: &CodingTask,
        spec: &KnowledgeSpec,
        profile: &StudentProfile,
        phase: Phase,
        call: &CallContext,
        messages: &[ChatMessage],
    ) -> Result<CodingTestResult> {
        self.config.validate()?;
        let n = self.config.n;
        let batch = self
            .backend
            .sample_candidates(call, messages, &self.config.params, n)?;
        let mut texts = vec![String::new(); n];
        for c in batch.candidates {
            texts[c.index] = c.text;
        }
        let reference: Vec<String> = spec
            .dependency_paths()
            .into_iter()
            .map(str::to_string)
            .collect();

        let mut result = CodingTestResult {
            task_id: task.task_id.clone(),
            level: profile.level,
            seed: profile.seed,
            phase,
            n,
            ks: self.config.ks.clone(),
            programs: Vec::with_capacity(n),
            pass_vector: Vec::with_capacity(n),
            causes: Vec::with_capacity(n),
            extracted_deps: Vec::with_capacity(n),
            reference_deps: reference.clone(),
            usage: batch.usage,
            warnings: batch.warnings,
        };
        for text in &texts {
            let (program, outcome, deps) = match extract_code(text, &task.function_name) {
                Ok(program) => {
                    let outcome = self.cache.run(task, &program, self.config.timeout)?;
                    let deps = extract_dependencies(self.extractor, &program, &reference)?;
                    (program, outcome, deps)
                }
                Err(Error::EmptyProgram) => {
                    (String::new(), TestOutcome::empty_program(), BTreeSet::new())
                }
                Err(e) => return Err(e),
            };
            result.programs.push(program);
            result.pass_vector.push(outcome.passed);
            result.causes.push(outcome.cause);
            result.extracted_deps.push(deps);
        }
        result.validate()?;
        Ok(result)
    }
}

/// One point of a tutoring outcome curve; `outcome` is `None` for a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TocPoint {
    pub turn: usize,
    pub outcome: Option<TutoringOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn turn(i: usize, tutor: &str, student: &str) -> DialogueTurn {
        DialogueTurn {
            index: i,
            tutor_utterance: tutor.into(),
            student_utterance: student.into(),
            belief_snapshot: None,
            candidates: None,
            selected_candidate: None,
            manager: None,
            token_usage: Default::default(),
            flags: Vec::new(),
        }
    }

    #[test]
    fn recalled_dialogue_truncates_tutor_only() {
        let long: String = (1..=100).map(|i| format!("t{i} ")).collect();
        let student: String = (1..=100).map(|i| format!("s{i} ")).collect();
        let d = recalled_dialogue(&[turn(1, &long, student.trim_end())], 60);
        let mut lines = d.lines();
        let tutor_line = lines.next().unwrap().strip_prefix("Tutor: ").unwrap();
        assert_eq!(tutor_line.split_whitespace().count(), 60);
        assert!(tutor_line.starts_with("t41 "));
        assert_eq!(
            lines.next().unwrap(),
            format!("Student: {}", student.trim_end())
        );
    }

    #[test]
    fn prefixes_nest() {
        let turns: Vec<_> = (1..=3)
            .map(|i| turn(i, &format!("r{i}"), &format!("s{i}")))
            .collect();
        let a = recalled_dialogue(&turns[..1], 60);
        let b = recalled_dialogue(&turns[..2], 60);
        let c = recalled_dialogue(&turns, 60);
        assert!(b.starts_with(&a) && b.len() > a.len());
        assert!(c.starts_with(&b) && c.len() > b.len());
    }

    #[test]
    fn phase_serde() {
        assert_eq!(serde_json::to_string(&Phase::Pre).unwrap(), "\"pre\"");
        assert_eq!(
            serde_json::to_string(&Phase::Toc(3)).unwrap(),
            "{\"toc\":3}"
        );
        assert_eq!(Phase::Toc(2).to_string(), "toc:2");
    }

    #[test]
    fn config_rejects_small_n() {
        let cfg = CodingTestConfig {
            n: 5,
            ..CodingTestConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(CodingTestConfig::default().validate().is_ok());
    }
}

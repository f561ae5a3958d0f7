//! Chat-completion backends.
//!
//! Every model call in the engine goes through [`BackendHandle`], which
//! validates the conversation, enforces the `n` contract, and feeds an atomic
//! usage meter. Concrete backends only implement [`ChatBackend::chat`].

mod message;
mod openai;
mod scripted;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use crate::domain::TokenUsage;
use crate::error::{Error, Result};

pub use message::{
    estimate_tokens, estimate_usage, validate_messages, CallContext, CallRole, ChatMessage,
    Completion, Role, SamplingParams, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, DEFAULT_TOP_P,
};
pub use openai::{ChatRequest, OpenAiBackend, OpenAiConfig};
pub use scripted::{ScriptRecord, ScriptedBackend};

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    /// True when a single request can return `n > 1` choices.
    fn native_n(&self) -> bool {
        true
    }

    fn chat(
        &self,
        call: &CallContext,
        messages: &[ChatMessage],
        params: &SamplingParams,
    ) -> Result<Completion>;
}

#[derive(Debug, Default)]
pub struct UsageMeter {
    prompt: AtomicU64,
    completion: AtomicU64,
    calls: AtomicU64,
    estimated: AtomicBool,
}

impl UsageMeter {
    pub fn record(&self, usage: TokenUsage) {
        self.prompt
            .fetch_add(usage.prompt_tokens, Ordering::Relaxed);
        self.completion
            .fetch_add(usage.completion_tokens, Ordering::Relaxed);
        self.calls.fetch_add(1, Ordering::Relaxed);
        if usage.estimated {
            self.estimated.store(true, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt.load(Ordering::Relaxed),
            completion_tokens: self.completion.load(Ordering::Relaxed),
            estimated: self.estimated.load(Ordering::Relaxed),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledCandidate {
    /// Position in the request, stable regardless of arrival order.
    pub index: usize,
    pub text: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateBatch {
    pub candidates: Vec<SampledCandidate>,
    /// One entry per candidate that could not be obtained.
    pub warnings: Vec<String>,
    /// Everything the batch cost, including dropped candidates.
    pub usage: TokenUsage,
}

#[derive(Clone)]
pub struct BackendHandle {
    backend: Arc<dyn ChatBackend>,
    meter: Arc<UsageMeter>,
}

impl std::fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendHandle")
            .field("name", &self.backend.name())
            .field("usage", &self.meter.snapshot())
            .finish()
    }
}

impl BackendHandle {
    pub fn new(backend: impl ChatBackend + 'static) -> Self {
        Self::from_arc(Arc::new(backend))
    }

    pub fn from_arc(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            meter: Arc::new(UsageMeter::default()),
        }
    }

    pub fn name(&self) -> &str {
        self.backend.name()
    }

    pub fn usage(&self) -> TokenUsage {
        self.meter.snapshot()
    }

    pub fn meter(&self) -> &UsageMeter {
        &self.meter
    }

    /// One request returning exactly `params.n` non-empty texts.
    pub fn complete(
        &self,
        call: &CallContext,
        messages: &[ChatMessage],
        params: &SamplingParams,
    ) -> Result<Completion> {
        let completion = self.raw(call, messages, params)?;
        if completion.texts.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::EmptyCompletion {
                backend: self.name().to_string(),
            });
        }
        Ok(completion)
    }

    fn raw(
        &self,
        call: &CallContext,
        messages: &[ChatMessage],
        params: &SamplingParams,
    ) -> Result<Completion> {
        validate_messages(messages)?;
        params.validate()?;
        let completion = self.backend.chat(call, messages, params)?;
        self.meter.record(completion.usage);
        if completion.texts.len() != params.n {
            return Err(Error::BackendUnavailable {
                backend: self.name().to_string(),
                reason: format!(
                    "requested {} completions, received {}",
                    params.n,
                    completion.texts.len()
                ),
            });
        }
        Ok(completion)
    }

    /// Draws `n` candidate replies, via one `n`-sample request when the
    /// backend supports it and `n` concurrent requests otherwise. Individual
    /// failures become warnings as long as one candidate survives.
    pub fn sample_candidates(
        &self,
        call: &CallContext,
        messages: &[ChatMessage],
        base: &SamplingParams,
        n: usize,
    ) -> Result<CandidateBatch> {
        if n == 0 {
            return Err(Error::InvalidInput("cannot sample zero candidates".into()));
        }
        if n == 1 || self.backend.native_n() {
            return self.sample_native(call, messages, base, n);
        }

        let single = base.with_n(1);
        let results: Vec<Result<Completion>> = thread::scope(|scope| {
            let workers: Vec<_> = (0..n)
                .map(|_| scope.spawn(|| self.complete(call, messages, &single)))
                .collect();
            workers
                .into_iter()
                .map(|w| w.join().expect("candidate worker panicked"))
                .collect()
        });

        let mut batch = CandidateBatch::default();
        let mut first_error = None;
        for (index, result) in results.into_iter().enumerate() {
            match result {
                Ok(mut c) => {
                    batch.usage += c.usage;
                    batch.candidates.push(SampledCandidate {
                        index,
                        text: c.texts.remove(0),
                        usage: c.usage,
                    })
                }
                Err(e) => {
                    batch.warnings.push(format!("candidate {index}: {e}"));
                    first_error.get_or_insert(e);
                }
            }
        }
        match first_error {
            Some(e) if batch.candidates.is_empty() => Err(e),
            _ => Ok(batch),
        }
    }

    fn sample_native(
        &self,
        call: &CallContext,
        messages: &[ChatMessage],
        base: &SamplingParams,
        n: usize,
    ) -> Result<CandidateBatch> {
        let completion = self.raw(call, messages, &base.with_n(n))?;
        let shares = split_usage(completion.usage, n);
        let mut batch = CandidateBatch {
            usage: completion.usage,
            ..Default::default()
        };
        for (index, (text, usage)) in completion.texts.into_iter().zip(shares).enumerate() {
            if text.trim().is_empty() {
                batch
                    .warnings
                    .push(format!("candidate {index}: empty completion"));
            } else {
                batch
                    .candidates
                    .push(SampledCandidate { index, text, usage });
            }
        }
        if batch.candidates.is_empty() {
            return Err(Error::EmptyCompletion {
                backend: self.name().to_string(),
            });
        }
        Ok(batch)
    }
}

/// Splits one request's usage over its `n` choices so the shares add back
/// up exactly. The prompt is charged to the first choice.
fn split_usage(total: TokenUsage, n: usize) -> Vec<TokenUsage> {
    let n64 = n as u64;
    let base = total.completion_tokens / n64;
    let rem = total.completion_tokens % n64;
    (0..n64)
        .map(|i| TokenUsage {
            prompt_tokens: if i == 0 { total.prompt_tokens } else { 0 },
            completion_tokens: base + u64::from(i < rem),
            estimated: total.estimated,
        })
        .collect()
}

/// The dialogue roles a run assigns backends to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentRole {
    Tutor,
    Student,
    Manager,
    Tracer,
}

/// Per-role backend assignment. Pre- and post-test generation use the
/// student's backend; knowledge tracing falls back to the tutor's.
#[derive(Debug, Clone)]
pub struct BackendRegistry {
    tutor: BackendHandle,
    student: BackendHandle,
    manager: BackendHandle,
    tracer: Option<BackendHandle>,
}

impl BackendRegistry {
    pub fn new(tutor: BackendHandle, student: BackendHandle, manager: BackendHandle) -> Self {
        Self {
            tutor,
            student,
            manager,
            tracer: None,
        }
    }

    /// All roles served by one backend.
    pub fn uniform(backend: BackendHandle) -> Self {
        Self::new(backend.clone(), backend.clone(), backend)
    }

    pub fn with_tracer(mut self, tracer: BackendHandle) -> Self {
        self.tracer = Some(tracer);
        self
    }

    pub fn get(&self, role: AgentRole) -> &BackendHandle {
        match role {
            AgentRole::Tutor => &self.tutor,
            AgentRole::Student => &self.student,
            AgentRole::Manager => &self.manager,
            AgentRole::Tracer => self.tracer.as_ref().unwrap_or(&self.tutor),
        }
    }

    pub fn tutor(&self) -> &BackendHandle {
        self.get(AgentRole::Tutor)
    }

    pub fn student(&self) -> &BackendHandle {
        self.get(AgentRole::Student)
    }

    pub fn manager(&self) -> &BackendHandle {
        self.get(AgentRole::Manager)
    }

    pub fn tracer(&self) -> &BackendHandle {
        self.get(AgentRole::Tracer)
    }

    /// Usage per distinct backend name.
    pub fn usage_by_backend(&self) -> BTreeMap<String, TokenUsage> {
        let mut out = BTreeMap::new();
        let mut seen: Vec<*const UsageMeter> = Vec::new();
        for h in [&self.tutor, &self.student, &self.manager]
            .into_iter()
            .chain(self.tracer.as_ref())
        {
            let ptr = Arc::as_ptr(&h.meter);
            if !seen.contains(&ptr) {
                seen.push(ptr);
                *out.entry(h.name().to_string()).or_default() += h.usage();
            }
        }
        out
    }
}

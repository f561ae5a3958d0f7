use std::thread;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::belief::{parse_kt_output, KnowledgeBelief};
use super::manager::{parse_verdict, ManagerDecision, Verdict};
use super::prompts::{dialogue_of, student_messages, tutor_messages, PromptTemplates};
use crate::backend::{
    BackendHandle, BackendRegistry, CallContext, CallRole, ChatMessage, SamplingParams,
};
use crate::domain::{
    CodingTask, DialogueTurn, KnowledgeSpec, ScoredCandidate, SessionSnapshot, StudentProfile,
    Termination, TokenUsage, Transcript, TurnUsage, TutorMethod,
};
use crate::error::{Error, Result};
use crate::reward::{rank_candidates, score, ScoreRequest, Scorer};

pub const DEFAULT_MAX_TURNS: usize = 8;
pub const DEFAULT_PARSE_RETRIES: usize = 2;

pub const FLAG_KT_PARSE_FAILURE: &str = "kt_parse_failure";
pub const FLAG_MANAGER_FALLBACK: &str = "manager_verdict_fallback";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub method: TutorMethod,
    pub max_turns: usize,
    /// Candidate utterances per turn for the verifier-ranked tutor.
    pub candidates: usize,
    pub tutor_params: SamplingParams,
    pub student_params: SamplingParams,
    pub manager_params: SamplingParams,
    pub tracer_params: SamplingParams,
    /// Extra attempts after an unparseable tracer or manager reply.
    pub parse_retries: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            method: TutorMethod::Vanilla,
            max_turns: DEFAULT_MAX_TURNS,
            candidates: 1,
            tutor_params: SamplingParams::default(),
            student_params: SamplingParams::default(),
            manager_params: SamplingParams::default(),
            tracer_params: SamplingParams::default(),
            parse_retries: DEFAULT_PARSE_RETRIES,
        }
    }
}

impl SessionConfig {
    pub fn traver(candidates: usize) -> Self {
        Self {
            method: TutorMethod::Traver,
            candidates,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 {
            return Err(Error::InvalidConfig("max_turns must be at least 1".into()));
        }
        if self.candidates == 0 {
            return Err(Error::InvalidConfig("candidates must be at least 1".into()));
        }
        for p in [
            &self.tutor_params,
            &self.student_params,
            &self.manager_params,
            &self.tracer_params,
        ] {
            p.validate()?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            max_turns: self.max_turns,
            candidates: match self.method {
                TutorMethod::Vanilla => 1,
                TutorMethod::Traver => self.candidates,
            },
            method: self.method,
        }
    }
}

/// The task being tutored, bundled for the per-turn operations.
#[derive(Debug, Clone, Copy)]
pub struct SessionTask<'a> {
    pub task: &'a CodingTask,
    pub spec: &'a KnowledgeSpec,
    pub profile: &'a StudentProfile,
}

impl SessionTask<'_> {
    fn call(&self, role: CallRole, turn: usize) -> CallContext {
        CallContext::new(role, turn, &self.task.task_id).with_level(self.profile.level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Traced {
    pub belief: KnowledgeBelief,
    pub usage: TokenUsage,
    pub attempts: usize,
    /// True when every attempt was unparseable and `belief` is the previous
    /// estimate carried forward.
    pub parse_failed: bool,
}

impl Traced {
    pub fn require_parsed(self) -> Result<Self> {
        if self.parse_failed {
            Err(Error::KtParseFailure {
                attempts: self.attempts,
            })
        } else {
            Ok(self)
        }
    }
}

/// Estimates the student's knowledge before the tutor speaks at `turn`,
/// from the dialogue so far and the previous estimate. Before any dialogue
/// the all-unknown belief is returned without a model call.
#[allow(clippy::too_many_arguments)]
pub fn trace_knowledge(
    backend: &BackendHandle,
    templates: &PromptTemplates,
    session: SessionTask<'_>,
    turns: &[DialogueTurn],
    previous: &KnowledgeBelief,
    turn: usize,
    params: &SamplingParams,
    retries: usize,
) -> Result<Traced> {
    if turns.is_empty() {
        let mut belief = previous.clone();
        belief.turn_index = turn;
        return Ok(Traced {
            belief,
            usage: TokenUsage::default(),
            attempts: 0,
            parse_failed: false,
        });
    }
    let prompt = templates.knowledge_tracing(session.task, session.spec, turns, previous);
    let messages = [ChatMessage::system(prompt)];
    let call = session.call(CallRole::Tracer, turn);
    let mut usage = TokenUsage::default();
    for attempt in 1..=retries + 1 {
        let completion = backend.complete(&call, &messages, &params.with_n(1))?;
        usage += completion.usage;
        if let Some(lists) = parse_kt_output(&completion.texts[0], session.spec) {
            return Ok(Traced {
                belief: previous.updated(&lists, turn),
                usage,
                attempts: attempt,
                parse_failed: false,
            });
        }
        debug!(turn, attempt, "unparseable knowledge tracing output");
    }
    warn!(task = %session.task.task_id, turn, "knowledge tracing parse failure, keeping previous belief");
    let mut belief = previous.clone();
    belief.turn_index = turn;
    Ok(Traced {
        belief,
        usage,
        attempts: retries + 1,
        parse_failed: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TutorOutput {
    pub utterance: String,
    pub candidates: Option<Vec<ScoredCandidate>>,
    pub selected: Option<usize>,
    /// Updated belief (traver) or `None` (vanilla keeps the caller's belief).
    pub belief: Option<KnowledgeBelief>,
    pub tutor_usage: TokenUsage,
    pub tracer_usage: TokenUsage,
    pub flags: Vec<String>,
}

/// Everything the tutor side needs for one turn.
#[derive(Clone, Copy)]
pub struct TutorAgent<'a> {
    pub generator: &'a BackendHandle,
    pub tracer: &'a BackendHandle,
    pub scorer: Option<&'a dyn Scorer>,
    pub templates: &'a PromptTemplates,
}

/// Produces the tutor utterance for `turn` (1-based).
///
/// Vanilla samples one reply. Traver traces knowledge, adds the missing-KC
/// focus section to the prompt, samples `n` candidates, scores each with
/// the verifier and keeps the best.
pub fn tutor_turn(
    method: TutorMethod,
    agent: TutorAgent<'_>,
    config: &SessionConfig,
    session: SessionTask<'_>,
    turns: &[DialogueTurn],
    belief: &KnowledgeBelief,
) -> Result<TutorOutput> {
    let turn = turns.len() + 1;
    if turn > config.max_turns {
        return Err(Error::InvalidInput(format!(
            "transcript already has {} turns",
            turns.len()
        )));
    }
    let call = session.call(CallRole::Tutor, turn);
    match method {
        TutorMethod::Vanilla => {
            let messages = tutor_messages(agent.templates, session.task, session.spec, turns, None);
            let completion = agent
                .generator
                .complete(&call, &messages, &config.tutor_params.with_n(1))
                .map_err(|e| turn_failure(turn, e))?;
            Ok(TutorOutput {
                utterance: completion.texts.into_iter().next().unwrap_or_default(),
                candidates: None,
                selected: None,
                belief: None,
                tutor_usage: completion.usage,
                tracer_usage: TokenUsage::default(),
                flags: Vec::new(),
            })
        }
        TutorMethod::Traver => {
            let scorer = agent.scorer.ok_or_else(|| {
                Error::InvalidConfig("verifier-ranked tutoring requires a scorer".into())
            })?;
            let mut flags = Vec::new();
            let traced = trace_knowledge(
                agent.tracer,
                agent.templates,
                session,
                turns,
                belief,
                turn,
                &config.tracer_params,
                config.parse_retries,
            )
            .map_err(|e| turn_failure(turn, e))?;
            if traced.parse_failed {
                flags.push(FLAG_KT_PARSE_FAILURE.to_string());
            }

            let messages = tutor_messages(
                agent.templates,
                session.task,
                session.spec,
                turns,
                Some(&traced.belief),
            );
            let batch = agent
                .generator
                .sample_candidates(&call, &messages, &config.tutor_params, config.candidates)
                .map_err(|e| turn_failure(turn, e))?;
            flags.extend(batch.warnings.iter().map(|w| format!("sampling: {w}")));

            let context = dialogue_of(turns);
            let scored = score_all(scorer, session.task, &context, turn, &batch.candidates);
            let mut candidates = Vec::new();
            for (candidate, result) in batch.candidates.iter().zip(scored) {
                match result {
                    Ok(s) => {
                        if let Some(raw) = s.clamped_from {
                            flags.push(format!(
                                "score: candidate {} clamped from {raw}",
                                candidate.index
                            ));
                        }
                        candidates.push(ScoredCandidate {
                            index: candidate.index,
                            text: candidate.text.clone(),
                            score: s.value,
                        });
                    }
                    Err(e) => flags.push(format!("score: candidate {}: {e}", candidate.index)),
                }
            }
            if candidates.is_empty() {
                return Err(Error::TurnFailure {
                    turn,
                    reason: "no candidate could be scored".into(),
                });
            }
            let scores: Vec<f64> = candidates.iter().map(|c| c.score).collect();
            let winner = rank_candidates(&scores)?;
            Ok(TutorOutput {
                utterance: candidates[winner].text.clone(),
                selected: Some(candidates[winner].index),
                candidates: Some(candidates),
                belief: Some(traced.belief),
                tutor_usage: batch.usage,
                tracer_usage: traced.usage,
                flags,
            })
        }
    }
}

fn score_all(
    scorer: &dyn Scorer,
    task: &CodingTask,
    context: &str,
    turn: usize,
    candidates: &[crate::backend::SampledCandidate],
) -> Vec<Result<crate::reward::Score>> {
    thread::scope(|scope| {
        let workers: Vec<_> = candidates
            .iter()
            .map(|c| {
                scope.spawn(move || {
                    score(
                        scorer,
                        &ScoreRequest {
                            task_id: &task.task_id,
                            task: task.task_text(),
                            context,
                            candidate: &c.text,
                            turn,
                            candidate_index: c.index,
                        },
                    )
                })
            })
            .collect();
        workers
            .into_iter()
            .map(|w| w.join().expect("scoring worker panicked"))
            .collect()
    })
}

fn turn_failure(turn: usize, e: Error) -> Error {
    match e {
        Error::TurnFailure { .. } => e,
        other => Error::TurnFailure {
            turn,
            reason: other.to_string(),
        },
    }
}

/// Simulated student's reply to the tutor's latest utterance.
pub fn student_reply(
    backend: &BackendHandle,
    templates: &PromptTemplates,
    session: SessionTask<'_>,
    turns: &[DialogueTurn],
    tutor_utterance: &str,
    params: &SamplingParams,
) -> Result<(String, TokenUsage)> {
    let turn = turns.len() + 1;
    let messages = student_messages(
        templates,
        session.task,
        session.profile,
        session.spec,
        turns,
        tutor_utterance,
    );
    let completion = backend.complete(
        &session.call(CallRole::Student, turn),
        &messages,
        &params.with_n(1),
    )?;
    Ok((
        completion.texts.into_iter().next().unwrap_or_default(),
        completion.usage,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decided {
    pub decision: ManagerDecision,
    pub usage: TokenUsage,
}

/// Asks the manager whether the tutoring goal is met after the completed
/// `turns`. Unparseable replies are retried, then default to `continue`.
pub fn manager_decides(
    backend: &BackendHandle,
    templates: &PromptTemplates,
    session: SessionTask<'_>,
    turns: &[DialogueTurn],
    params: &SamplingParams,
    retries: usize,
) -> Result<Decided> {
    if turns.is_empty() {
        return Err(Error::InvalidInput(
            "manager needs at least one completed turn".into(),
        ));
    }
    let prompt = templates.manager(session.task, session.spec, session.profile, turns);
    let messages = [ChatMessage::system(prompt)];
    let call = session.call(CallRole::Manager, turns.len());
    let mut usage = TokenUsage::default();
    let mut last = String::new();
    for _ in 0..=retries {
        let completion = backend.complete(&call, &messages, &params.with_n(1))?;
        usage += completion.usage;
        if let Some(decision) = parse_verdict(&completion.texts[0]) {
            return Ok(Decided { decision, usage });
        }
        last = completion.texts.into_iter().next().unwrap_or_default();
    }
    warn!(task = %session.task.task_id, turn = turns.len(), "no manager verdict, continuing");
    Ok(Decided {
        decision: ManagerDecision::fallback(last),
        usage,
    })
}

/// Runs a whole tutoring session.
pub struct SessionRunner<'a> {
    pub backends: &'a BackendRegistry,
    pub scorer: Option<&'a dyn Scorer>,
    pub templates: &'a PromptTemplates,
    pub config: &'a SessionConfig,
}

impl SessionRunner<'_> {
    /// Tutor opens, then each turn is tutor utterance, student reply and a
    /// manager verdict. Stops when the manager declares the goal achieved or
    /// after `max_turns` turns. A failed turn ends the session as `aborted`
    /// with the completed turns kept.
    pub fn run(
        &self,
        task: &CodingTask,
        spec: &KnowledgeSpec,
        profile: &StudentProfile,
    ) -> Result<Transcript> {
        self.config.validate()?;
        spec.validate()?;
        profile.check_consistent(spec)?;
        if self.config.method == TutorMethod::Traver && self.scorer.is_none() {
            return Err(Error::InvalidConfig(
                "verifier-ranked tutoring requires a scorer".into(),
            ));
        }
        let session = SessionTask {
            task,
            spec,
            profile,
        };
        let mut turns: Vec<DialogueTurn> = Vec::new();
        let mut belief = KnowledgeBelief::initial(spec);
        let mut termination = Termination::MaxTurns;
        let mut abort_reason = None;

        while turns.len() < self.config.max_turns {
            match self.play_turn(session, &turns, &belief) {
                Ok((turn, next_belief)) => {
                    let done = turn
                        .manager
                        .as_ref()
                        .is_some_and(|d| d.verdict == Verdict::GoalAchieved);
                    if let Some(b) = next_belief {
                        belief = b;
                    }
                    turns.push(turn);
                    if done {
                        termination = Termination::ManagerGoalAchieved;
                        break;
                    }
                }
                Err(e) => {
                    warn!(task = %task.task_id, error = %e, "session aborted");
                    termination = Termination::Aborted;
                    abort_reason = Some(e.to_string());
                    break;
                }
            }
        }

        Ok(Transcript {
            task_id: task.task_id.clone(),
            profile: profile.clone(),
            turns,
            termination,
            abort_reason,
            config: self.config.snapshot(),
        })
    }

    fn play_turn(
        &self,
        session: SessionTask<'_>,
        turns: &[DialogueTurn],
        belief: &KnowledgeBelief,
    ) -> Result<(DialogueTurn, Option<KnowledgeBelief>)> {
        let index = turns.len() + 1;
        let agent = TutorAgent {
            generator: self.backends.tutor(),
            tracer: self.backends.tracer(),
            scorer: self.scorer,
            templates: self.templates,
        };
        let tutor = tutor_turn(
            self.config.method,
            agent,
            self.config,
            session,
            turns,
            belief,
        )?;
        let (student, student_usage) = student_reply(
            self.backends.student(),
            self.templates,
            session,
            turns,
            &tutor.utterance,
            &self.config.student_params,
        )
        .map_err(|e| turn_failure(index, e))?;

        let mut turn = DialogueTurn {
            index,
            tutor_utterance: tutor.utterance,
            student_utterance: student,
            belief_snapshot: tutor.belief.clone(),
            candidates: tutor.candidates,
            selected_candidate: tutor.selected,
            manager: None,
            token_usage: TurnUsage {
                tutor: tutor.tutor_usage,
                tracer: tutor.tracer_usage,
                student: student_usage,
                manager: TokenUsage::default(),
            },
            flags: tutor.flags,
        };

        let mut with_current = turns.to_vec();
        with_current.push(turn.clone());
        let decided = manager_decides(
            self.backends.manager(),
            self.templates,
            session,
            &with_current,
            &self.config.manager_params,
            self.config.parse_retries,
        )
        .map_err(|e| turn_failure(index, e))?;
        if decided.decision.fallback {
            turn.flags.push(FLAG_MANAGER_FALLBACK.to_string());
        }
        turn.token_usage.manager = decided.usage;
        turn.manager = Some(decided.decision);
        Ok((turn, tutor.belief))
    }
}

/// Convenience wrapper around [`SessionRunner::run`].
pub fn run_session(
    backends: &BackendRegistry,
    scorer: Option<&dyn Scorer>,
    templates: &PromptTemplates,
    config: &SessionConfig,
    task: &CodingTask,
    spec: &KnowledgeSpec,
    profile: &StudentProfile,
) -> Result<Transcript> {
    SessionRunner {
        backends,
        scorer,
        templates,
        config,
    }
    .run(task, spec, profile)
}

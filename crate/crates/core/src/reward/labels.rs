//! Verifier training data.
//!
//! Each exported line is `{"input_text", "target", ...}` where `input_text`
//! is built by [`verifier_input_text`]:
//!
//! ```text
//! [TASK]
//! <function signature and requirement>
//! [CONTEXT]
//! <dialogue before the turn, one "Tutor: ..." / "Student: ..." line each>
//! [CANDIDATE]
//! <tutor utterance of the turn>
//! ```
//!
//! The remote scorer receives the same three parts as separate JSON fields,
//! so a trainer and a scoring server can share one formatting routine.

use std::io::Write;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reward_trace;
use crate::agents::render_dialogue;
use crate::domain::{derive_rng, CodingTask, Transcript};
use crate::error::{Error, Result};

pub fn verifier_input_text(task: &str, context: &str, candidate: &str) -> String {
    format!("[TASK]\n{task}\n[CONTEXT]\n{context}\n[CANDIDATE]\n{candidate}")
}

/// Assigns per-turn binary outcomes to a finished session.
pub trait OutcomePolicy {
    fn outcomes(&self, transcript: &Transcript, post_test_success: bool) -> Vec<bool>;
}

/// Every turn inherits the session's post-test verdict.
#[derive(Debug, Clone, Copy, Default)]
pub struct SessionOutcome;

impl OutcomePolicy for SessionOutcome {
    fn outcomes(&self, transcript: &Transcript, post_test_success: bool) -> Vec<bool> {
        vec![post_test_success; transcript.turns.len()]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LabeledSession<'a> {
    pub session_id: &'a str,
    pub task: &'a CodingTask,
    pub transcript: &'a Transcript,
    pub post_test_success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierExample {
    pub input_text: String,
    pub target: f64,
    pub session_id: String,
    pub task_id: String,
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelSet {
    pub examples: Vec<VerifierExample>,
    pub positive_sessions: Vec<String>,
    pub negative_sessions: Vec<String>,
    /// Negative sessions left out by balancing.
    pub dropped_sessions: Vec<String>,
}

impl LabelSet {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for ex in &self.examples {
            serde_json::to_writer(&mut out, ex).map_err(|e| Error::json("writing labels", e))?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("writing labels", e))?;
        }
        Ok(())
    }
}

/// Builds one example per turn for every positive session and for a seeded
/// sample of negative sessions the same size as the positive set.
pub fn label_sessions(
    sessions: &[LabeledSession<'_>],
    policy: &dyn OutcomePolicy,
    seed: u64,
) -> Result<LabelSet> {
    let positives: Vec<usize> = (0..sessions.len())
        .filter(|&i| sessions[i].post_test_success)
        .collect();
    let negatives: Vec<usize> = (0..sessions.len())
        .filter(|&i| !sessions[i].post_test_success)
        .collect();
    if positives.is_empty() {
        return Err(Error::EmptyLabelSet);
    }

    let keep = positives.len().min(negatives.len());
    let mut rng: ChaCha8Rng = derive_rng(seed, &["label-balance"]);
    let mut picked = index::sample(&mut rng, negatives.len(), keep).into_vec();
    picked.sort_unstable();
    let kept_neg: Vec<usize> = picked.iter().map(|&i| negatives[i]).collect();

    let mut selected: Vec<usize> = positives.iter().chain(&kept_neg).copied().collect();
    selected.sort_unstable();

    let mut set = LabelSet::default();
    for &i in &selected {
        let s = &sessions[i];
        let turns = s.transcript.turns.len();
        if turns == 0 {
            continue;
        }
        let outcomes = policy.outcomes(s.transcript, s.post_test_success);
        let trace = reward_trace(turns, &outcomes)?;
        for (t, turn) in s.transcript.turns.iter().enumerate() {
            let context = render_dialogue(
                s.transcript.turns[..t]
                    .iter()
                    .map(|p| (p.tutor_utterance.as_str(), p.student_utterance.as_str())),
            );
            set.examples.push(VerifierExample {
                input_text: verifier_input_text(
                    s.task.task_text(),
                    &context,
                    &turn.tutor_utterance,
                ),
                target: trace.values[t],
                session_id: s.session_id.to_string(),
                task_id: s.task.task_id.clone(),
                turn: turn.index,
            });
        }
        if s.post_test_success {
            set.positive_sessions.push(s.session_id.to_string());
        } else {
            set.negative_sessions.push(s.session_id.to_string());
        }
    }
    set.dropped_sessions = negatives
        .iter()
        .filter(|i| !kept_neg.contains(i))
        .map(|&i| sessions[i].session_id.to_string())
        .collect();
    Ok(set)
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;
    use crate::domain::{
        CompletionSite, DialogueTurn, SessionSnapshot, StudentLevel, StudentProfile, Termination,
        TutorMethod,
    };

    fn task() -> CodingTask {
        CodingTask {
            task_id: "t1".into(),
            function_name: "f".into(),
            signature_and_doc: "def f():\n    \"\"\"Return one.\"\"\"\n".into(),
            repo_root: PathBuf::from("."),
            test_command: "true".into(),
            interpreter_hint: "python3".into(),
            completion_site: CompletionSite {
                file: "m.py".into(),
                start_line: 1,
                end_line: 2,
            },
            check_command: None,
            reference_solution: None,
        }
    }

    fn transcript(turns: usize) -> Transcript {
        Transcript {
            task_id: "t1".into(),
            profile: StudentProfile {
                level: StudentLevel::Low,
                dependency_ratio: 0.5,
                seed: 0,
                granted_dependencies: Vec::new(),
                granted_code_contexts: false,
            },
            turns: (1..=turns)
                .map(|i| DialogueTurn {
                    index: i,
                    tutor_utterance: format!("hint {i}"),
                    student_utterance: format!("reply {i}"),
                    belief_snapshot: None,
                    candidates: None,
                    selected_candidate: None,
                    manager: None,
                    token_usage: Default::default(),
                    flags: Vec::new(),
                })
                .collect(),
            termination: Termination::MaxTurns,
            abort_reason: None,
            config: SessionSnapshot {
                max_turns: 8,
                candidates: 1,
                method: TutorMethod::Vanilla,
            },
        }
    }

    #[test]
    fn input_text_layout() {
        let t = task();
        let tr = transcript(2);
        let ids = ["s0".to_string()];
        let sessions = [LabeledSession {
            session_id: &ids[0],
            task: &t,
            transcript: &tr,
            post_test_success: true,
        }];
        let set = label_sessions(&sessions, &SessionOutcome, 1).unwrap();
        assert_eq!(
            set.examples[1].input_text,
            "[TASK]\ndef f():\n    \"\"\"Return one.\"\"\"\n[CONTEXT]\nTutor: hint 1\nStudent: reply 1\n[CANDIDATE]\nhint 2"
        );
        assert!(set.examples[0]
            .input_text
            .ends_with("[CONTEXT]\n\n[CANDIDATE]\nhint 1"));
        assert_eq!(
            set.examples.iter().map(|e| e.target).collect::<Vec<_>>(),
            [0.5, 1.0]
        );
    }

    #[test]
    fn balances_negatives_with_seed() {
        let t = task();
        let tr = transcript(4);
        let ids: Vec<String> = (0..12).map(|i| format!("s{i:02}")).collect();
        let sessions: Vec<_> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| LabeledSession {
                session_id: id,
                task: &t,
                transcript: &tr,
                post_test_success: i < 2,
            })
            .collect();
        let a = label_sessions(&sessions, &SessionOutcome, 7).unwrap();
        let b = label_sessions(&sessions, &SessionOutcome, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.positive_sessions, ["s00", "s01"]);
        assert_eq!(a.negative_sessions.len(), 2);
        assert_eq!(a.dropped_sessions.len(), 8);
        assert_eq!(a.examples.len(), 16);
        for ex in &a.examples {
            if a.negative_sessions.contains(&ex.session_id) {
                assert_eq!(ex.target, 0.0);
            } else {
                assert_eq!(ex.target, ex.turn as f64 / 4.0);
            }
        }
    }

    #[test]
    fn needs_a_positive_session() {
        let t = task();
        let tr = transcript(1);
        let ids = ["s".to_string()];
        let sessions = [LabeledSession {
            session_id: &ids[0],
            task: &t,
            transcript: &tr,
            post_test_success: false,
        }];
        assert!(matches!(
            label_sessions(&sessions, &SessionOutcome, 0),
            Err(Error::EmptyLabelSet)
        ));
    }
}

//! Turn-level rewards, verifier labels, scoring, and best-of-N ranking.

mod labels;
mod rank;
mod scorer;
mod trace;

pub use labels::{
    label_sessions, verifier_input_text, LabelSet, LabeledSession, OutcomePolicy, SessionOutcome,
    VerifierExample,
};
pub use rank::rank_candidates;
pub use scorer::{
    score, HttpScorer, Score, ScoreRecord, ScoreRequest, ScoreWireRequest, Scorer, ScriptedScorer,
};
pub use trace::{reward_trace, RewardTrace};

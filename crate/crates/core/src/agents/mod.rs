//! Tutor, student, knowledge tracer and manager agents, and the session loop
//! that drives them.

mod belief;
mod manager;
mod prompts;
mod session;

pub use belief::{parse_kt_output, KcBelief, KcLabel, KnowledgeBelief, TracedLists};
pub use manager::{parse_verdict, ManagerDecision, Verdict};
pub use prompts::{
    build_student_prompt, build_tutor_prompt, dialogue_of, render, render_dialogue,
    student_messages, tutor_messages, PromptTemplates,
};
pub use session::{
    manager_decides, run_session, student_reply, trace_knowledge, tutor_turn, Decided,
    SessionConfig, SessionRunner, SessionTask, Traced, TutorAgent, TutorOutput, DEFAULT_MAX_TURNS,
    DEFAULT_PARSE_RETRIES, FLAG_KT_PARSE_FAILURE, FLAG_MANAGER_FALLBACK,
};

//! Builds verifier training lines from finished sessions and prints them.
//!
//! cargo run --example label_export

use std::path::{Path, PathBuf};

use tutorbench::domain::{
    CodingTask, CompletionSite, DialogueTurn, SessionSnapshot, StudentLevel, StudentProfile,
    Termination, Transcript, TutorMethod,
};
use tutorbench::reward::{label_sessions, LabeledSession, SessionOutcome};

fn transcript(hints: &[&str]) -> Transcript {
    Transcript {
        task_id: "shop-total".into(),
        profile: StudentProfile {
            level: StudentLevel::Low,
            dependency_ratio: 0.5,
            seed: 0,
            granted_dependencies: Vec::new(),
            granted_code_contexts: false,
        },
        turns: hints
            .iter()
            .enumerate()
            .map(|(i, hint)| DialogueTurn {
                index: i + 1,
                tutor_utterance: hint.to_string(),
                student_utterance: "OK.".into(),
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

fn main() -> tutorbench::Result<()> {
    let task = CodingTask {
        task_id: "shop-total".into(),
        function_name: "total".into(),
        signature_and_doc: "def total(self):\n    \"\"\"Cart total with tax.\"\"\"\n".into(),
        repo_root: PathBuf::from("."),
        test_command: "true".into(),
        interpreter_hint: "python3".into(),
        completion_site: CompletionSite {
            file: Path::new("shop/cart.py").into(),
            start_line: 10,
            end_line: 11,
        },
        check_command: None,
        reference_solution: None,
    };
    let good = transcript(&[
        "Start from subtotal.",
        "Then apply_tax.",
        "Finally round_money.",
    ]);
    let bad = [
        transcript(&["Write some code."]),
        transcript(&["Have you tried a loop?", "Maybe recursion."]),
    ];
    let ids = ["good", "bad-0", "bad-1"];
    let mut sessions = vec![LabeledSession {
        session_id: ids[0],
        task: &task,
        transcript: &good,
        post_test_success: true,
    }];
    for (t, id) in bad.iter().zip(&ids[1..]) {
        sessions.push(LabeledSession {
            session_id: id,
            task: &task,
            transcript: t,
            post_test_success: false,
        });
    }
    let set = label_sessions(&sessions, &SessionOutcome, 0)?;
    println!(
        "kept {:?} and {:?}, dropped {:?}",
        set.positive_sessions, set.negative_sessions, set.dropped_sessions
    );
    set.write_jsonl(std::io::stdout().lock())
}

//! Whole tutoring sessions driven by scripted backends.

use std::path::Path;

use tutorbench::agents::{
    run_session, KcLabel, PromptTemplates, SessionConfig, FLAG_KT_PARSE_FAILURE,
    FLAG_MANAGER_FALLBACK,
};
use tutorbench::backend::{BackendHandle, BackendRegistry, CallRole, ScriptedBackend};
use tutorbench::domain::{
    sample_student_knowledge, Dataset, StudentLevel, StudentProfile, TaskEntry, Termination,
    Transcript, TutorMethod,
};
use tutorbench::reward::{ScoreRecord, Scorer, ScriptedScorer};
use tutorbench::Error;

fn entry() -> TaskEntry {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tasks.jsonl");
    Dataset::load(&path).unwrap().entries.remove(0)
}

fn profile(entry: &TaskEntry) -> StudentProfile {
    sample_student_knowledge(&entry.knowledge, StudentLevel::Medium, 0.5, 1).unwrap()
}

fn dialogue_script() -> ScriptedBackend {
    let s = ScriptedBackend::new("script");
    s.push_repeating(
        CallRole::Tutor,
        &[
            "Which helper rounds money?",
            "Try summing first.",
            "Now apply tax.",
        ],
    );
    s.push_repeating(CallRole::Student, &["round_money, I think.", "Like this?"]);
    s.push_repeating(
        CallRole::Manager,
        &["The student is progressing.\nVERDICT: CONTINUE"],
    );
    s
}

fn run(
    registry: &BackendRegistry,
    scorer: Option<&dyn Scorer>,
    config: &SessionConfig,
) -> tutorbench::Result<Transcript> {
    let e = entry();
    run_session(
        registry,
        scorer,
        &PromptTemplates::default(),
        config,
        &e.task,
        &e.knowledge,
        &profile(&e),
    )
}

fn scores(rows: &[(usize, usize, f64)]) -> ScriptedScorer {
    ScriptedScorer::new(
        rows.iter()
            .map(|&(turn, candidate_index, score)| ScoreRecord {
                turn,
                candidate_index,
                score,
                task_id: None,
            }),
    )
    .with_fallback(0.5)
}

#[test]
fn vanilla_runs_to_the_turn_limit() {
    let registry = BackendRegistry::uniform(BackendHandle::new(dialogue_script()));
    let t = run(&registry, None, &SessionConfig::default()).unwrap();
    assert_eq!(t.turns.len(), 8);
    assert_eq!(t.termination, Termination::MaxTurns);
    assert_eq!(t.config.method, TutorMethod::Vanilla);
    for (i, turn) in t.turns.iter().enumerate() {
        assert_eq!(turn.index, i + 1);
        assert!(turn.candidates.is_none() && turn.belief_snapshot.is_none());
        assert!(turn.token_usage.tutor.total() > 0);
        assert!(turn.token_usage.student.total() > 0);
        assert!(turn.token_usage.manager.total() > 0);
        assert_eq!(turn.token_usage.tracer.total(), 0);
    }
    assert_eq!(t.turns[1].tutor_utterance, "Try summing first.");
    t.validate().unwrap();
}

#[test]
fn goal_achieved_ends_the_session() {
    let script = dialogue_script();
    script.push(
        CallRole::Manager,
        3,
        &["All dependencies are covered.\nVERDICT: GOAL_ACHIEVED"],
    );
    let registry = BackendRegistry::uniform(BackendHandle::new(script));
    let t = run(&registry, None, &SessionConfig::default()).unwrap();
    assert_eq!(t.turns.len(), 3);
    assert_eq!(t.termination, Termination::ManagerGoalAchieved);
    let verdict = t.turns[2].manager.as_ref().unwrap();
    assert_eq!(verdict.rationale, "All dependencies are covered.");
}

#[test]
fn ranked_tutoring_takes_the_best_candidate() {
    let script = dialogue_script();
    script.push_repeating(
        CallRole::Tracer,
        &["Known knowledge components: [dep:1]\nUnknown knowledge components: [dep:2, step:1]"],
    );
    let registry = BackendRegistry::uniform(BackendHandle::new(script));
    let scorer = scores(&[
        (1, 2, 0.9),
        (1, 0, 0.1),
        (2, 0, 0.8),
        (2, 1, 0.3),
        (2, 2, 0.2),
    ]);
    let mut config = SessionConfig::traver(3);
    config.max_turns = 2;
    let t = run(&registry, Some(&scorer), &config).unwrap();

    assert_eq!(t.turns.len(), 2);
    assert_eq!(t.turns[0].selected_candidate, Some(2));
    assert_eq!(t.turns[1].selected_candidate, Some(0));
    for turn in &t.turns {
        let cands = turn.candidates.as_ref().unwrap();
        assert_eq!(cands.len(), 3);
        let chosen = cands
            .iter()
            .find(|c| Some(c.index) == turn.selected_candidate)
            .unwrap();
        assert_eq!(chosen.text, turn.tutor_utterance);
    }

    // No dialogue yet at turn 1: nothing to trace.
    let first = t.turns[0].belief_snapshot.as_ref().unwrap();
    assert!(first.known_ids().is_empty());
    assert_eq!(t.turns[0].token_usage.tracer.total(), 0);
    let second = t.turns[1].belief_snapshot.as_ref().unwrap();
    assert_eq!(second.get("dep:1"), Some(KcLabel::Known));
    assert!(t.turns[1].token_usage.tracer.total() > 0);
}

#[test]
fn ties_go_to_the_lowest_index() {
    let registry = BackendRegistry::uniform(BackendHandle::new(dialogue_script()));
    let scorer = scores(&[]);
    let mut config = SessionConfig::traver(3);
    config.max_turns = 1;
    let t = run(&registry, Some(&scorer), &config).unwrap();
    assert_eq!(t.turns[0].selected_candidate, Some(0));
}

#[test]
fn out_of_range_scores_are_clamped_and_flagged() {
    let registry = BackendRegistry::uniform(BackendHandle::new(dialogue_script()));
    let scorer = scores(&[(1, 1, 1.3), (1, 0, -0.1)]);
    let mut config = SessionConfig::traver(2);
    config.max_turns = 1;
    let t = run(&registry, Some(&scorer), &config).unwrap();
    let turn = &t.turns[0];
    let cands = turn.candidates.as_ref().unwrap();
    assert_eq!(cands[0].score, 0.0);
    assert_eq!(cands[1].score, 1.0);
    assert_eq!(turn.selected_candidate, Some(1));
    assert_eq!(
        turn.flags.iter().filter(|f| f.contains("clamped")).count(),
        2
    );
}

#[test]
fn unparseable_tracing_keeps_the_previous_belief() {
    let tracer = ScriptedBackend::new("tracer");
    tracer.push_repeating(CallRole::Tracer, &["The student seems fine."]);
    let tracer = BackendHandle::new(tracer);
    let registry =
        BackendRegistry::uniform(BackendHandle::new(dialogue_script())).with_tracer(tracer.clone());
    let scorer = scores(&[]);
    let mut config = SessionConfig::traver(2);
    config.max_turns = 3;
    let t = run(&registry, Some(&scorer), &config).unwrap();

    assert_eq!(t.turns.len(), 3);
    assert!(!t.turns[0].flags.iter().any(|f| f == FLAG_KT_PARSE_FAILURE));
    for turn in &t.turns[1..] {
        assert!(turn.flags.iter().any(|f| f == FLAG_KT_PARSE_FAILURE));
        assert!(turn
            .belief_snapshot
            .as_ref()
            .unwrap()
            .known_ids()
            .is_empty());
    }
    // Turns 2 and 3 each make the first attempt plus two retries.
    assert_eq!(
        tracer.meter().calls(),
        2 * (config.parse_retries as u64 + 1)
    );
}

#[test]
fn unparseable_verdict_falls_back_to_continue() {
    let manager = ScriptedBackend::new("manager");
    manager.push_repeating(CallRole::Manager, &["Hard to say."]);
    let manager = BackendHandle::new(manager);
    let dialogue = BackendHandle::new(dialogue_script());
    let registry = BackendRegistry::new(dialogue.clone(), dialogue, manager.clone());
    let config = SessionConfig {
        max_turns: 2,
        ..SessionConfig::default()
    };
    let t = run(&registry, None, &config).unwrap();
    assert_eq!(t.turns.len(), 2);
    for turn in &t.turns {
        assert!(turn.flags.iter().any(|f| f == FLAG_MANAGER_FALLBACK));
        assert!(turn.manager.as_ref().unwrap().fallback);
    }
    assert_eq!(
        manager.meter().calls(),
        2 * (config.parse_retries as u64 + 1)
    );
}

#[test]
fn failed_turn_aborts_and_keeps_completed_turns() {
    let s = ScriptedBackend::new("script");
    s.push_repeating(CallRole::Tutor, &["hint"]);
    s.push(CallRole::Student, 1, &["one"]);
    s.push(CallRole::Student, 2, &["two"]);
    s.push_repeating(CallRole::Manager, &["VERDICT: CONTINUE"]);
    let registry = BackendRegistry::uniform(BackendHandle::new(s));
    let t = run(&registry, None, &SessionConfig::default()).unwrap();
    assert_eq!(t.turns.len(), 2);
    assert_eq!(t.termination, Termination::Aborted);
    assert!(
        t.abort_reason.as_deref().unwrap().contains("turn 3"),
        "{:?}",
        t.abort_reason
    );
}

#[test]
fn ranked_tutoring_needs_a_scorer() {
    let registry = BackendRegistry::uniform(BackendHandle::new(dialogue_script()));
    let err = run(&registry, None, &SessionConfig::traver(3)).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
}

#[test]
fn transcripts_survive_a_round_trip() {
    let script = dialogue_script();
    script.push_repeating(
        CallRole::Tracer,
        &["Known knowledge components: [step:1]\nUnknown knowledge components: [dep:1]"],
    );
    let registry = BackendRegistry::uniform(BackendHandle::new(script));
    let scorer = scores(&[(2, 1, 0.7)]);
    let mut config = SessionConfig::traver(2);
    config.max_turns = 3;
    let t = run(&registry, Some(&scorer), &config).unwrap();
    let text = t.to_jsonl_string();
    assert_eq!(Transcript::read_jsonl(text.as_bytes()).unwrap(), t);
}

#[test]
fn identical_scripts_give_identical_transcripts() {
    let make = || {
        let script = dialogue_script();
        script.push_repeating(
            CallRole::Tracer,
            &["Known knowledge components: [dep:1]\nUnknown knowledge components: [step:1]"],
        );
        BackendRegistry::uniform(BackendHandle::new(script))
    };
    let scorer = scores(&[(1, 1, 0.6), (3, 2, 0.9)]);
    let config = SessionConfig::traver(3);
    let a = run(&make(), Some(&scorer), &config).unwrap();
    let b = run(&make(), Some(&scorer), &config).unwrap();
    assert_eq!(a.to_jsonl_string(), b.to_jsonl_string());
}

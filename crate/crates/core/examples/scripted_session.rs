//! One vanilla and one verifier-ranked session on a fixture task, with
//! scripted models standing in for the tutor, student, tracer and manager.
//!
//! cargo run --example scripted_session

use std::path::Path;

use tutorbench::agents::{run_session, PromptTemplates, SessionConfig};
use tutorbench::backend::{BackendHandle, BackendRegistry, CallRole, ScriptedBackend};
use tutorbench::domain::{sample_student_knowledge, Dataset, StudentLevel};
use tutorbench::reward::{ScoreRecord, ScriptedScorer};

fn main() -> tutorbench::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let dataset = Dataset::load(&fixtures.join("tasks.jsonl"))?;
    let entry = dataset.get("toyshop-cart-total").expect("fixture task");
    let profile = sample_student_knowledge(&entry.knowledge, StudentLevel::Medium, 0.5, 0)?;
    let templates = PromptTemplates::default();

    let script = ScriptedBackend::new("script");
    script.push_repeating(
        CallRole::Tutor,
        &[
            "What does Cart.subtotal give you?",
            "Good. Which pricing helper adds tax?",
            "Round the taxed value with round_money.",
        ],
    );
    script.push_repeating(
        CallRole::Student,
        &["The sum of the prices.", "apply_tax?", "Got it."],
    );
    script.push_repeating(
        CallRole::Tracer,
        &["Known knowledge components: [dep:1]\nUnknown knowledge components: [dep:2, dep:3]"],
    );
    script.push_repeating(CallRole::Manager, &["VERDICT: CONTINUE"]);
    script.push(
        CallRole::Manager,
        3,
        &["The plan is complete.\nVERDICT: GOAL_ACHIEVED"],
    );
    let registry = BackendRegistry::uniform(BackendHandle::new(script));

    let vanilla = run_session(
        &registry,
        None,
        &templates,
        &SessionConfig::default(),
        &entry.task,
        &entry.knowledge,
        &profile,
    )?;
    println!(
        "vanilla: {} turns, {:?}",
        vanilla.turns.len(),
        vanilla.termination
    );
    for turn in &vanilla.turns {
        println!(
            "  {}. Tutor: {}\n     Student: {}",
            turn.index, turn.tutor_utterance, turn.student_utterance
        );
    }

    let scorer = ScriptedScorer::new((1..=8).flat_map(|turn| {
        (0..3).map(move |candidate_index| ScoreRecord {
            turn,
            candidate_index,
            score: if candidate_index == turn % 3 {
                0.9
            } else {
                0.2
            },
            task_id: None,
        })
    }));
    let traver = run_session(
        &registry,
        Some(&scorer),
        &templates,
        &SessionConfig::traver(3),
        &entry.task,
        &entry.knowledge,
        &profile,
    )?;
    println!(
        "ranked: {} turns, {:?}",
        traver.turns.len(),
        traver.termination
    );
    for turn in &traver.turns {
        let scores: Vec<String> = turn
            .candidates
            .iter()
            .flatten()
            .map(|c| format!("{:.1}", c.score))
            .collect();
        let known = turn
            .belief_snapshot
            .as_ref()
            .map(|b| b.known_ids().join(","))
            .unwrap_or_default();
        println!(
            "  {}. picked {:?} of [{}], known [{known}]: {}",
            turn.index,
            turn.selected_candidate,
            scores.join(" "),
            turn.tutor_utterance
        );
    }
    println!(
        "tokens: vanilla {}, ranked {}",
        vanilla.total_usage().total(),
        traver.total_usage().total()
    );
    Ok(())
}

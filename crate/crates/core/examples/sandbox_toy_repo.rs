//! Runs the bundled toy repository's tests against each task's reference
//! solution, a crashing program and a looping one.
//!
//! cargo run --example sandbox_toy_repo

use std::path::Path;
use std::time::Duration;

use tutorbench::domain::Dataset;
use tutorbench::eval::{repo_hash, run_unit_tests};

fn main() -> tutorbench::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let dataset = Dataset::load(&fixtures.join("tasks.jsonl"))?;
    let repo = fixtures.join("toy_repo");
    let before = repo_hash(&repo)?;

    for entry in &dataset.entries {
        let task = &entry.task;
        let reference = task.reference_solution.as_deref().unwrap_or("");
        let outcome = run_unit_tests(task, reference, Duration::from_secs(30))?;
        println!("{:<22} reference -> {:?}", task.task_id, outcome.cause);
    }

    let slugify = &dataset.get("toyshop-slugify").expect("fixture task").task;
    let crash = run_unit_tests(
        slugify,
        "def slugify(text) return text",
        Duration::from_secs(30),
    )?;
    println!("{:<22} syntax error -> {:?}", slugify.task_id, crash.cause);
    let looping = run_unit_tests(
        slugify,
        "def slugify(text):\n    while True:\n        pass\n",
        Duration::from_secs(2),
    )?;
    println!(
        "{:<22} endless loop -> {:?}",
        slugify.task_id, looping.cause
    );

    assert_eq!(before, repo_hash(&repo)?, "repository changed");
    println!("repository hash unchanged: {before}");
    Ok(())
}

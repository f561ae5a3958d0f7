//! Candidate-count sweep on the scripted fixture run, in a temp directory.
//!
//! cargo run --example scaling_sweep

use std::path::Path;

use tutorbench::cli::{cmd_ingest, cmd_scaling, RunConfig};

fn main() -> tutorbench::Result<()> {
    let out = tempfile::tempdir().map_err(|e| tutorbench::Error::io("creating temp dir", e))?;
    let config_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scripted/tutorbench.toml");
    let config = RunConfig::load(
        &config_path,
        &[format!("output_dir={:?}", out.path().display().to_string())],
    )?;
    cmd_ingest(&config)?;
    let (_, rows) = cmd_scaling(&config, Some(&[1, 3, 5]))?;
    println!(
        "{:>2} {:>8} {:>8} {:>14} {:>14}",
        "N", "pass", "recall", "tutor tok/ses", "total tok/ses"
    );
    for r in rows {
        println!(
            "{:>2} {:>8.1} {:>8.1} {:>14.1} {:>14.1}",
            r.candidates, r.pass, r.recall, r.tutor_tokens_per_session, r.total_tokens_per_session
        );
    }
    Ok(())
}

//! Every pipeline command on the scripted fixture configuration. The run
//! directory is kept and its path printed.
//!
//! cargo run --example full_pipeline

use std::path::Path;

use tutorbench::cli::{
    cmd_ingest, cmd_label, cmd_posttest, cmd_pretest, cmd_report, cmd_simulate, cmd_toc,
    CommandSummary, RunConfig,
};

fn main() -> tutorbench::Result<()> {
    let out = tempfile::Builder::new()
        .prefix("tutorbench-run-")
        .tempdir()
        .map_err(|e| tutorbench::Error::io("creating run dir", e))?
        .keep();
    let config_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scripted/tutorbench.toml");
    let config = RunConfig::load(
        &config_path,
        &[format!("output_dir={:?}", out.display().to_string())],
    )?;

    type Step = fn(&RunConfig) -> tutorbench::Result<CommandSummary>;
    let steps: [(&str, Step); 7] = [
        ("ingest", cmd_ingest),
        ("pretest", cmd_pretest),
        ("simulate", cmd_simulate),
        ("posttest", cmd_posttest),
        ("label", cmd_label),
        ("report", cmd_report),
        ("toc", cmd_toc),
    ];
    for (name, step) in steps {
        let s = step(&config)?;
        println!(
            "{name:<9} written {:>3}, skipped {:>3}",
            s.written, s.skipped
        );
    }
    println!();
    print!(
        "{}",
        std::fs::read_to_string(out.join("report/summary.md"))
            .map_err(|e| tutorbench::Error::io("reading summary", e))?
    );
    println!("\nrun directory: {}", out.display());
    Ok(())
}

//! Command-line orchestration: configuration, the run directory, and the
//! pipeline commands.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use config::{
    BackendConfig, ExtractorConfig, FoldConfig, RoleConfig, RunConfig, Sampling, ScorerConfig,
};
pub use run::{
    build_agents, cmd_ingest, cmd_label, cmd_posttest, cmd_pretest, cmd_report, cmd_scaling,
    cmd_simulate, cmd_toc, write_atomic, write_manifest, Agents, Cell, CommandSummary, RunDir,
    ScalingRow, Workspace,
};

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(
    name = "tutorbench",
    version,
    about = "Simulate and evaluate coding-tutoring sessions"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "tutorbench.toml")]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set max_turns=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the dataset, check reference solutions, split folds.
    Ingest,
    /// Coding test before any tutoring.
    Pretest,
    /// Run tutoring sessions.
    Simulate,
    /// Coding test after each session.
    Posttest,
    /// Export verifier training examples.
    Label,
    /// Aggregate results into the summary table.
    Report,
    /// Outcome after every dialogue prefix.
    Toc,
    /// Sweep the number of candidate utterances per turn.
    Scaling {
        /// Candidate counts, e.g. `1,5,10`; defaults to the config.
        #[arg(long, value_delimiter = ',')]
        candidates: Option<Vec<usize>>,
    },
}

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

pub fn execute(cli: &Cli) -> Result<CommandSummary, Error> {
    let config = RunConfig::load(&cli.config, &cli.overrides)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&config),
        Command::Pretest => cmd_pretest(&config),
        Command::Simulate => cmd_simulate(&config),
        Command::Posttest => cmd_posttest(&config),
        Command::Label => cmd_label(&config),
        Command::Report => cmd_report(&config),
        Command::Toc => cmd_toc(&config),
        Command::Scaling { candidates } => {
            let (mut summary, rows) = cmd_scaling(&config, candidates.as_deref())?;
            for r in rows {
                summary.notes.push(format!(
                    "N={:<3} pass={:.1} tutor_tokens/session={:.1} total_tokens/session={:.1}",
                    r.candidates, r.pass, r.tutor_tokens_per_session, r.total_tokens_per_session
                ));
            }
            Ok(summary)
        }
    }
}

/// Parses arguments, runs the command and maps errors to exit codes:
/// 1 for invalid configuration or missing inputs, 2 for runtime failures.
pub fn main_entry() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            println!("written: {}, skipped: {}", summary.written, summary.skipped);
            for note in summary.notes {
                println!("{note}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            })
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid task specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("backend `{backend}` unavailable: {reason}")]
    BackendUnavailable { backend: String, reason: String },

    #[error("backend `{backend}` returned an empty completion")]
    EmptyCompletion { backend: String },

    #[error("scripted backend has no fixture left for role `{role}` at turn {turn}")]
    ScriptExhausted { role: String, turn: usize },

    #[error("knowledge tracing output could not be parsed after {attempts} attempts")]
    KtParseFailure { attempts: usize },

    #[error("turn {turn} failed: {reason}")]
    TurnFailure { turn: usize, reason: String },

    #[error("no successful sessions to label")]
    EmptyLabelSet,

    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),

    #[error("completion contains no program")]
    EmptyProgram,

    #[error("task environment missing: {0}")]
    EnvMissing(String),

    #[error("dependency extractor failed: {0}")]
    ExtractorError(String),

    #[error("tutoring outcome rate undefined: pre-test value is zero")]
    UndefinedTor,

    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: PathBuf, hint: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Errors caused by bad user input (config, dataset, arguments) rather than
    /// a failure while running. The CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidConfig(_)
                | Error::InvalidInput(_)
                | Error::MissingArtifact { .. }
        )
    }
}

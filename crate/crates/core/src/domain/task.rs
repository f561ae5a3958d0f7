use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_INTERPRETER: &str = "python3";

fn default_interpreter() -> String {
    DEFAULT_INTERPRETER.to_string()
}

/// Location of the target function inside its repository. Lines are 1-based
/// and inclusive, covering the whole definition (signature through body).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionSite {
    pub file: PathBuf,
    pub start_line: usize,
    pub end_line: usize,
}

/// A single target function the student has to implement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingTask {
    pub task_id: String,
    pub function_name: String,
    /// Function signature followed by its requirement description.
    pub signature_and_doc: String,
    pub repo_root: PathBuf,
    /// Shell command template run from `repo_root`. Supports `{interpreter}`,
    /// `{repo}` and `{file}` placeholders.
    pub test_command: String,
    #[serde(default = "default_interpreter")]
    pub interpreter_hint: String,
    pub completion_site: CompletionSite,
    /// Optional load check run before the tests (same placeholders). A
    /// failing check is reported as a crash rather than a test failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<String>,
}

impl CodingTask {
    pub fn validate(&self) -> Result<()> {
        if self.task_id.trim().is_empty() {
            return Err(Error::InvalidSpec("task_id is empty".into()));
        }
        if self.function_name.trim().is_empty() {
            return Err(Error::InvalidSpec(format!(
                "task {}: function_name is empty",
                self.task_id
            )));
        }
        if self.signature_and_doc.trim().is_empty() {
            return Err(Error::InvalidSpec(format!(
                "task {}: signature_and_doc is empty",
                self.task_id
            )));
        }
        let site = &self.completion_site;
        if site.start_line == 0 || site.end_line < site.start_line {
            return Err(Error::InvalidSpec(format!(
                "task {}: completion site lines {}..{} are invalid",
                self.task_id, site.start_line, site.end_line
            )));
        }
        Ok(())
    }

    /// Text block shown to every role as the target coding task.
    pub fn task_text(&self) -> &str {
        self.signature_and_doc.trim_end()
    }
}

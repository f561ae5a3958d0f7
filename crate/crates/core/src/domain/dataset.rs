//! Line-delimited task ingestion.
//!
//! Each line of a dataset file is one JSON object:
//!
//! ```json
//! {
//!   "task_id": "toy.add",
//!   "function_name": "add",
//!   "signature_and_doc": "def add(a, b):\n    \"\"\"Return a + b.\"\"\"",
//!   "repo_root": "repos/toy",
//!   "test_command": "{interpreter} tests/test_add.py",
//!   "interpreter_hint": "python3",
//!   "completion_site": {"file": "toy/ops.py", "start_line": 4, "end_line": 6},
//!   "check_command": "{interpreter} -m py_compile {file}",
//!   "reference_solution": "def add(a, b):\n    return a + b\n",
//!   "code_contexts": "import math\n",
//!   "dependencies": [{"path": "toy.ops.helper", "dep_type": "intra_file"}],
//!   "solution_steps": ["Call helper", "Return the sum"]
//! }
//! ```
//!
//! Relative `repo_root` values are resolved against the dataset file's
//! directory. Knowledge component ids are assigned as `dep:<n>` and
//! `step:<n>` (1-based) in file order.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CodingTask, DepType, KnowledgeComponent, KnowledgeSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyRecord {
    pub path: String,
    pub dep_type: DepType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    #[serde(flatten)]
    pub task: CodingTask,
    #[serde(default)]
    pub code_contexts: String,
    pub dependencies: Vec<DependencyRecord>,
    #[serde(default)]
    pub solution_steps: Vec<String>,
}

/// A validated task together with the knowledge the tutor receives.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEntry {
    pub task: CodingTask,
    pub knowledge: KnowledgeSpec,
}

impl TaskRecord {
    pub fn into_entry(self) -> Result<TaskEntry> {
        let TaskRecord {
            task,
            code_contexts,
            dependencies,
            solution_steps,
        } = self;
        let knowledge = KnowledgeSpec {
            task_id: task.task_id.clone(),
            code_contexts,
            dependencies: dependencies
                .into_iter()
                .enumerate()
                .map(|(i, dep)| {
                    let mut kc = KnowledgeComponent::dependency(i + 1, dep.path, dep.dep_type);
                    kc.description = dep.description;
                    kc
                })
                .collect(),
            solution_steps: solution_steps
                .into_iter()
                .enumerate()
                .map(|(i, step)| KnowledgeComponent::solution_step(i + 1, step))
                .collect(),
        };
        task.validate()?;
        knowledge.validate()?;
        Ok(TaskEntry { task, knowledge })
    }

    pub fn from_entry(entry: &TaskEntry) -> TaskRecord {
        TaskRecord {
            task: entry.task.clone(),
            code_contexts: entry.knowledge.code_contexts.clone(),
            dependencies: entry
                .knowledge
                .dependencies
                .iter()
                .map(|kc| DependencyRecord {
                    path: kc.path_or_text.clone(),
                    dep_type: kc.dep_type.unwrap_or(DepType::CrossFile),
                    description: kc.description.clone(),
                })
                .collect(),
            solution_steps: entry
                .knowledge
                .solution_steps
                .iter()
                .map(|kc| kc.path_or_text.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub entries: Vec<TaskEntry>,
}

impl Dataset {
    pub fn parse_jsonl(text: &str, base_dir: Option<&Path>) -> Result<Dataset> {
        let mut entries = Vec::new();
        let mut ids = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut record: TaskRecord = serde_json::from_str(line)
                .map_err(|e| Error::json(format!("dataset line {}", lineno + 1), e))?;
            if let Some(base) = base_dir {
                if record.task.repo_root.is_relative() {
                    record.task.repo_root = base.join(&record.task.repo_root);
                }
            }
            let entry = record.into_entry().map_err(|e| match e {
                Error::InvalidSpec(msg) => {
                    Error::InvalidSpec(format!("dataset line {}: {msg}", lineno + 1))
                }
                other => other,
            })?;
            if !ids.insert(entry.task.task_id.clone()) {
                return Err(Error::InvalidSpec(format!(
                    "dataset line {}: duplicate task_id {}",
                    lineno + 1,
                    entry.task.task_id
                )));
            }
            entries.push(entry);
        }
        Ok(Dataset { entries })
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading dataset {}", path.display()), e))?;
        Dataset::parse_jsonl(&text, path.parent())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        for entry in &self.entries {
            serde_json::to_writer(&mut out, &TaskRecord::from_entry(entry))
                .expect("task records always serialize");
            out.write_all(b"\n").expect("writing to a Vec cannot fail");
        }
        String::from_utf8(out).expect("serde_json emits UTF-8")
    }

    pub fn get(&self, task_id: &str) -> Option<&TaskEntry> {
        self.entries.iter().find(|e| e.task.task_id == task_id)
    }

    pub fn tasks(&self) -> Vec<&CodingTask> {
        self.entries.iter().map(|e| &e.task).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"task_id":"t1","function_name":"f","signature_and_doc":"def f():\n    \"\"\"doc\"\"\"","repo_root":"repo","test_command":"{interpreter} t.py","completion_site":{"file":"m.py","start_line":1,"end_line":2},"code_contexts":"import os","dependencies":[{"path":"m.g","dep_type":"intra_file"}],"solution_steps":["call g"]}"#;

    #[test]
    fn parses_and_assigns_ids() {
        let ds = Dataset::parse_jsonl(LINE, Some(Path::new("/data"))).unwrap();
        let e = &ds.entries[0];
        assert_eq!(e.task.repo_root, Path::new("/data/repo"));
        assert_eq!(e.task.interpreter_hint, "python3");
        assert_eq!(e.knowledge.dependencies[0].kc_id, "dep:1");
        assert_eq!(e.knowledge.solution_steps[0].kc_id, "step:1");
    }

    #[test]
    fn rejects_duplicates_and_empty_deps() {
        let dup = format!("{LINE}\n{LINE}\n");
        assert!(matches!(
            Dataset::parse_jsonl(&dup, None),
            Err(Error::InvalidSpec(_))
        ));
        let nodeps = LINE.replace(r#"[{"path":"m.g","dep_type":"intra_file"}]"#, "[]");
        assert!(matches!(
            Dataset::parse_jsonl(&nodeps, None),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn round_trips_through_jsonl() {
        let ds = Dataset::parse_jsonl(LINE, None).unwrap();
        let again = Dataset::parse_jsonl(&ds.to_jsonl(), None).unwrap();
        assert_eq!(ds, again);
    }
}

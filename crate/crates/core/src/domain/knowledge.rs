use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KcKind {
    Dependency,
    SolutionStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepType {
    IntraClass,
    IntraFile,
    CrossFile,
}

/// One knowledge component: a reference dependency or a solution step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeComponent {
    pub kc_id: String,
    pub kind: KcKind,
    /// Dotted dependency path, or the prose of a solution step.
    pub path_or_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dep_type: Option<DepType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl KnowledgeComponent {
    pub fn dependency(index: usize, path: impl Into<String>, dep_type: DepType) -> Self {
        Self {
            kc_id: dependency_id(index),
            kind: KcKind::Dependency,
            path_or_text: path.into(),
            dep_type: Some(dep_type),
            description: None,
        }
    }

    pub fn solution_step(index: usize, text: impl Into<String>) -> Self {
        Self {
            kc_id: step_id(index),
            kind: KcKind::SolutionStep,
            path_or_text: text.into(),
            dep_type: None,
            description: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let text = self.path_or_text.trim();
        match self.kind {
            KcKind::Dependency => {
                if text.is_empty() || text.split('.').any(|seg| seg.trim().is_empty()) {
                    return Err(Error::InvalidSpec(format!(
                        "{}: `{}` is not a dotted dependency path",
                        self.kc_id, self.path_or_text
                    )));
                }
                if self.dep_type.is_none() {
                    return Err(Error::InvalidSpec(format!(
                        "{}: dependency has no dep_type",
                        self.kc_id
                    )));
                }
            }
            KcKind::SolutionStep => {
                if text.is_empty() {
                    return Err(Error::InvalidSpec(format!(
                        "{}: solution step is empty",
                        self.kc_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `dep:<n>` with a 1-based index in dataset order.
pub fn dependency_id(index: usize) -> String {
    format!("dep:{index}")
}

/// `step:<n>` with a 1-based index in dataset order.
pub fn step_id(index: usize) -> String {
    format!("step:{index}")
}

/// Task-specific knowledge available to the tutor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSpec {
    pub task_id: String,
    pub code_contexts: String,
    pub dependencies: Vec<KnowledgeComponent>,
    pub solution_steps: Vec<KnowledgeComponent>,
}

impl KnowledgeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dependencies.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "task {}: no reference dependencies",
                self.task_id
            )));
        }
        let mut seen = HashSet::new();
        for kc in self.dependencies.iter().chain(&self.solution_steps) {
            kc.validate()?;
            if !seen.insert(kc.kc_id.as_str()) {
                return Err(Error::InvalidSpec(format!(
                    "task {}: duplicate kc_id {}",
                    self.task_id, kc.kc_id
                )));
            }
        }
        if let Some(kc) = self
            .dependencies
            .iter()
            .find(|kc| kc.kind != KcKind::Dependency)
        {
            return Err(Error::InvalidSpec(format!(
                "{} listed as dependency but has kind {:?}",
                kc.kc_id, kc.kind
            )));
        }
        if let Some(kc) = self
            .solution_steps
            .iter()
            .find(|kc| kc.kind != KcKind::SolutionStep)
        {
            return Err(Error::InvalidSpec(format!(
                "{} listed as solution step but has kind {:?}",
                kc.kc_id, kc.kind
            )));
        }
        Ok(())
    }

    /// The full KC set: dependencies first, then solution steps.
    pub fn components(&self) -> impl Iterator<Item = &KnowledgeComponent> {
        self.dependencies.iter().chain(&self.solution_steps)
    }

    pub fn component(&self, kc_id: &str) -> Option<&KnowledgeComponent> {
        self.components().find(|kc| kc.kc_id == kc_id)
    }

    pub fn dependency_paths(&self) -> Vec<&str> {
        self.dependencies
            .iter()
            .map(|kc| kc.path_or_text.as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> KnowledgeSpec {
        KnowledgeSpec {
            task_id: "t".into(),
            code_contexts: String::new(),
            dependencies: vec![
                KnowledgeComponent::dependency(1, "pkg.a", DepType::CrossFile),
                KnowledgeComponent::dependency(2, "pkg.b", DepType::IntraFile),
            ],
            solution_steps: vec![KnowledgeComponent::solution_step(1, "do it")],
        }
    }

    #[test]
    fn valid_spec_passes() {
        spec().validate().unwrap();
        let ids: Vec<_> = spec().components().map(|kc| kc.kc_id.clone()).collect();
        assert_eq!(ids, ["dep:1", "dep:2", "step:1"]);
    }

    #[test]
    fn empty_dependencies_rejected() {
        let mut s = spec();
        s.dependencies.clear();
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn malformed_dependency_rejected() {
        let mut s = spec();
        s.dependencies[0].path_or_text = "pkg..a".into();
        assert!(s.validate().is_err());
        let mut s = spec();
        s.dependencies[1].dep_type = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut s = spec();
        s.dependencies[1].kc_id = "dep:1".into();
        assert!(s.validate().is_err());
    }
}

//! Prompt templates and the builders that fill them.
//!
//! Templates are plain text files under `assets/prompts/` with `{NAME}`
//! placeholders. They are compiled in as defaults and can be overridden
//! file by file with [`PromptTemplates::from_dir`].

use std::fs;
use std::path::Path;

use super::KnowledgeBelief;
use crate::backend::ChatMessage;
use crate::domain::{CodingTask, DialogueTurn, KnowledgeSpec, StudentLevel, StudentProfile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub tutor: String,
    pub tutor_focus: String,
    pub student: String,
    pub knowledge_low: String,
    pub knowledge_medium: String,
    pub knowledge_high: String,
    pub pretest: String,
    pub posttest: String,
    pub knowledge_tracing: String,
    pub manager: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            tutor: include_str!("../../assets/prompts/tutor.txt").into(),
            tutor_focus: include_str!("../../assets/prompts/tutor_focus.txt").into(),
            student: include_str!("../../assets/prompts/student.txt").into(),
            knowledge_low: include_str!("../../assets/prompts/knowledge_low.txt").into(),
            knowledge_medium: include_str!("../../assets/prompts/knowledge_medium.txt").into(),
            knowledge_high: include_str!("../../assets/prompts/knowledge_high.txt").into(),
            pretest: include_str!("../../assets/prompts/pretest.txt").into(),
            posttest: include_str!("../../assets/prompts/posttest.txt").into(),
            knowledge_tracing: include_str!("../../assets/prompts/knowledge_tracing.txt").into(),
            manager: include_str!("../../assets/prompts/manager.txt").into(),
        }
    }
}

impl PromptTemplates {
    /// Defaults, with any `<name>.txt` found in `dir` taking precedence.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut t = Self::default();
        let slots: [(&str, &mut String); 10] = [
            ("tutor", &mut t.tutor),
            ("tutor_focus", &mut t.tutor_focus),
            ("student", &mut t.student),
            ("knowledge_low", &mut t.knowledge_low),
            ("knowledge_medium", &mut t.knowledge_medium),
            ("knowledge_high", &mut t.knowledge_high),
            ("pretest", &mut t.pretest),
            ("posttest", &mut t.posttest),
            ("knowledge_tracing", &mut t.knowledge_tracing),
            ("manager", &mut t.manager),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = fs::read_to_string(&path)
                    .map_err(|e| Error::io(format!("reading template {}", path.display()), e))?;
            }
        }
        Ok(t)
    }
}

/// Single-pass `{NAME}` substitution. Substituted values are not scanned
/// again, and unknown placeholders are left untouched.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name.and_then(|n| vars.iter().find(|(k, _)| *k == n)) {
            Some((key, value)) => {
                out.push_str(value);
                rest = &after[key.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// `Tutor: ...` / `Student: ...` lines, one pair per turn.
pub fn render_dialogue<'a>(turns: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut lines = Vec::new();
    for (tutor, student) in turns {
        lines.push(format!("Tutor: {}", tutor.trim()));
        lines.push(format!("Student: {}", student.trim()));
    }
    lines.join("\n")
}

pub fn dialogue_of(turns: &[DialogueTurn]) -> String {
    render_dialogue(
        turns
            .iter()
            .map(|t| (t.tutor_utterance.as_str(), t.student_utterance.as_str())),
    )
}

fn dependency_list<'a>(paths: impl IntoIterator<Item = &'a str>) -> String {
    paths
        .into_iter()
        .map(|p| format!("- {p}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn step_list(spec: &KnowledgeSpec) -> String {
    spec.solution_steps
        .iter()
        .enumerate()
        .map(|(i, kc)| format!("{}. {}", i + 1, kc.path_or_text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn or_none(s: String) -> String {
    if s.trim().is_empty() {
        "(none)".to_string()
    } else {
        s
    }
}

impl PromptTemplates {
    /// The student's knowledge section for a profile.
    pub fn prior_knowledge(
        &self,
        task: &CodingTask,
        profile: &StudentProfile,
        spec: &KnowledgeSpec,
    ) -> String {
        let granted = dependency_list(
            spec.dependencies
                .iter()
                .filter(|kc| profile.granted_dependencies.contains(&kc.kc_id))
                .map(|kc| kc.path_or_text.as_str()),
        );
        let template = match profile.level {
            StudentLevel::Low => &self.knowledge_low,
            StudentLevel::Medium => &self.knowledge_medium,
            StudentLevel::High => &self.knowledge_high,
        };
        render(
            template,
            &[
                ("FUNCTION_NAME", &task.function_name),
                ("CODE_CONTEXTS", spec.code_contexts.trim_end()),
                ("PARTIAL_DEPENDENCIES", &or_none(granted)),
            ],
        )
        .trim_end()
        .to_string()
    }

    pub fn tutor_system(&self, task: &CodingTask, spec: &KnowledgeSpec) -> String {
        render(
            &self.tutor,
            &[
                ("FUNCTION_NAME", &task.function_name),
                ("TARGET_CODING_TASK", task.task_text()),
                ("CODE_CONTEXTS", spec.code_contexts.trim_end()),
                (
                    "REFERENCE_DEPENDENCIES",
                    &dependency_list(spec.dependency_paths()),
                ),
                ("REFERENCE_STEPS", &or_none(step_list(spec))),
            ],
        )
        .trim_end()
        .to_string()
    }

    /// Knowledge-state section appended to the tutor prompt.
    pub fn tutor_focus(&self, spec: &KnowledgeSpec, belief: &KnowledgeBelief) -> String {
        let (known, unknown) = belief.split(spec);
        let list = |kcs: Vec<&crate::domain::KnowledgeComponent>| {
            or_none(
                kcs.iter()
                    .map(|kc| format!("- {}: {}", kc.kc_id, kc.path_or_text.trim()))
                    .collect::<Vec<_>>()
                    .join("\n"),
            )
        };
        render(
            &self.tutor_focus,
            &[
                ("KNOWN_COMPONENTS", &list(known)),
                ("UNKNOWN_COMPONENTS", &list(unknown)),
            ],
        )
        .trim_end()
        .to_string()
    }

    pub fn student_system(
        &self,
        task: &CodingTask,
        profile: &StudentProfile,
        spec: &KnowledgeSpec,
    ) -> String {
        render(
            &self.student,
            &[
                ("FUNCTION_NAME", &task.function_name),
                ("TARGET_CODING_TASK", task.task_text()),
                (
                    "PRIOR_KNOWLEDGE",
                    &self.prior_knowledge(task, profile, spec),
                ),
            ],
        )
        .trim_end()
        .to_string()
    }

    pub fn knowledge_tracing(
        &self,
        task: &CodingTask,
        spec: &KnowledgeSpec,
        turns: &[DialogueTurn],
        previous: &KnowledgeBelief,
    ) -> String {
        let deps = spec
            .dependencies
            .iter()
            .map(|kc| format!("- {}: {}", kc.kc_id, kc.path_or_text))
            .collect::<Vec<_>>()
            .join("\n");
        let steps = spec
            .solution_steps
            .iter()
            .map(|kc| format!("- {}: {}", kc.kc_id, kc.path_or_text.trim()))
            .collect::<Vec<_>>()
            .join("\n");
        render(
            &self.knowledge_tracing,
            &[
                ("FUNCTION_NAME", &task.function_name),
                ("TARGET_CODING_TASK", task.task_text()),
                ("REFERENCE_DEPENDENCIES", &deps),
                ("REFERENCE_STEPS", &or_none(steps)),
                ("DIALOGUE_CONTEXT", &or_none(dialogue_of(turns))),
                ("PREVIOUS_TURN_ESTIMATION", &previous.render_lists()),
            ],
        )
        .trim_end()
        .to_string()
    }

    pub fn manager(
        &self,
        task: &CodingTask,
        spec: &KnowledgeSpec,
        profile: &StudentProfile,
        turns: &[DialogueTurn],
    ) -> String {
        render(
            &self.manager,
            &[
                ("FUNCTION_NAME", &task.function_name),
                ("TARGET_CODING_TASK", task.task_text()),
                ("CODE_CONTEXTS", spec.code_contexts.trim_end()),
                (
                    "REFERENCE_DEPENDENCIES",
                    &dependency_list(spec.dependency_paths()),
                ),
                ("REFERENCE_STEPS", &or_none(step_list(spec))),
                (
                    "PRIOR_KNOWLEDGE",
                    &self.prior_knowledge(task, profile, spec),
                ),
                ("DIALOGUE_CONTEXT", &or_none(dialogue_of(turns))),
            ],
        )
        .trim_end()
        .to_string()
    }

    /// Coding-test prompt; `dialogue` is `None` for the pre-test.
    pub fn coding_test(
        &self,
        task: &CodingTask,
        profile: &StudentProfile,
        spec: &KnowledgeSpec,
        dialogue: Option<&str>,
    ) -> String {
        let knowledge = self.prior_knowledge(task, profile, spec);
        let mut vars = vec![
            ("FUNCTION_NAME", task.function_name.as_str()),
            ("TARGET_CODING_TASK", task.task_text()),
            ("PRIOR_KNOWLEDGE", knowledge.as_str()),
        ];
        let template = match dialogue {
            Some(d) => {
                vars.push(("DIALOGUE_CONTEXT", d));
                &self.posttest
            }
            None => &self.pretest,
        };
        render(template, &vars).trim_end().to_string()
    }
}

/// Tutor system prompt for a task.
pub fn build_tutor_prompt(
    templates: &PromptTemplates,
    task: &CodingTask,
    spec: &KnowledgeSpec,
) -> Vec<ChatMessage> {
    vec![ChatMessage::system(templates.tutor_system(task, spec))]
}

/// Student system prompt for a task and profile.
pub fn build_student_prompt(
    templates: &PromptTemplates,
    task: &CodingTask,
    profile: &StudentProfile,
    spec: &KnowledgeSpec,
) -> Vec<ChatMessage> {
    vec![ChatMessage::system(
        templates.student_system(task, profile, spec),
    )]
}

/// Tutor generation conversation: the tutor's own turns are `assistant`
/// messages, the student's are `user` messages.
pub fn tutor_messages(
    templates: &PromptTemplates,
    task: &CodingTask,
    spec: &KnowledgeSpec,
    turns: &[DialogueTurn],
    focus: Option<&KnowledgeBelief>,
) -> Vec<ChatMessage> {
    let mut system = templates.tutor_system(task, spec);
    if let Some(belief) = focus {
        system.push_str("\n\n");
        system.push_str(&templates.tutor_focus(spec, belief));
    }
    let mut messages = vec![ChatMessage::system(system)];
    for turn in turns {
        messages.push(ChatMessage::assistant(turn.tutor_utterance.clone()));
        messages.push(ChatMessage::user(turn.student_utterance.clone()));
    }
    messages
}

/// Student reply conversation ending with the tutor's latest utterance.
pub fn student_messages(
    templates: &PromptTemplates,
    task: &CodingTask,
    profile: &StudentProfile,
    spec: &KnowledgeSpec,
    turns: &[DialogueTurn],
    tutor_utterance: &str,
) -> Vec<ChatMessage> {
    let mut messages = build_student_prompt(templates, task, profile, spec);
    for turn in turns {
        messages.push(ChatMessage::user(turn.tutor_utterance.clone()));
        messages.push(ChatMessage::assistant(turn.student_utterance.clone()));
    }
    messages.push(ChatMessage::user(tutor_utterance.to_string()));
    messages
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_single_pass() {
        let out = render("a {X} b {Y} {Z}", &[("X", "{Y}"), ("Y", "2")]);
        assert_eq!(out, "a {Y} b 2 {Z}");
        assert_eq!(render("{", &[]), "{");
        assert_eq!(render("x {A", &[("A", "1")]), "x {A");
    }

    #[test]
    fn dialogue_rendering() {
        assert_eq!(render_dialogue([]), "");
        assert_eq!(
            render_dialogue([("Hi ", "Hello"), ("Q?", "A.")]),
            "Tutor: Hi\nStudent: Hello\nTutor: Q?\nStudent: A."
        );
    }

    #[test]
    fn from_dir_overrides_single_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("manager.txt"), "custom {FUNCTION_NAME}").unwrap();
        let t = PromptTemplates::from_dir(dir.path()).unwrap();
        assert_eq!(t.manager, "custom {FUNCTION_NAME}");
        assert_eq!(t.tutor, PromptTemplates::default().tutor);
    }
}

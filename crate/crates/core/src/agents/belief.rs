//! Knowledge-tracing state and the parser for tracer output.

use serde::{Deserialize, Serialize};

use crate::domain::{KnowledgeComponent, KnowledgeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KcLabel {
    Known,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KcBelief {
    pub kc_id: String,
    pub label: KcLabel,
}

/// Estimated label of every knowledge component of a task, in KC order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBelief {
    pub turn_index: usize,
    pub labels: Vec<KcBelief>,
}

impl KnowledgeBelief {
    pub fn all_unknown<I, S>(kc_ids: I, turn_index: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            turn_index,
            labels: kc_ids
                .into_iter()
                .map(|id| KcBelief {
                    kc_id: id.into(),
                    label: KcLabel::Unknown,
                })
                .collect(),
        }
    }

    /// The belief before any dialogue: nothing known.
    pub fn initial(spec: &KnowledgeSpec) -> Self {
        Self::all_unknown(spec.components().map(|kc| kc.kc_id.clone()), 0)
    }

    pub fn get(&self, kc_id: &str) -> Option<KcLabel> {
        self.labels
            .iter()
            .find(|b| b.kc_id == kc_id)
            .map(|b| b.label)
    }

    pub fn set(&mut self, kc_id: &str, label: KcLabel) -> bool {
        match self.labels.iter_mut().find(|b| b.kc_id == kc_id) {
            Some(b) => {
                b.label = label;
                true
            }
            None => false,
        }
    }

    pub fn known_ids(&self) -> Vec<&str> {
        self.ids_with(KcLabel::Known)
    }

    pub fn unknown_ids(&self) -> Vec<&str> {
        self.ids_with(KcLabel::Unknown)
    }

    fn ids_with(&self, label: KcLabel) -> Vec<&str> {
        self.labels
            .iter()
            .filter(|b| b.label == label)
            .map(|b| b.kc_id.as_str())
            .collect()
    }

    /// True when every KC of `spec` carries exactly one label and nothing else
    /// is labelled.
    pub fn is_partition_of(&self, spec: &KnowledgeSpec) -> bool {
        let ids: Vec<&str> = spec.components().map(|kc| kc.kc_id.as_str()).collect();
        self.labels.len() == ids.len() && self.labels.iter().zip(&ids).all(|(b, id)| b.kc_id == *id)
    }

    pub fn split<'s>(
        &self,
        spec: &'s KnowledgeSpec,
    ) -> (Vec<&'s KnowledgeComponent>, Vec<&'s KnowledgeComponent>) {
        spec.components()
            .partition(|kc| self.get(&kc.kc_id) == Some(KcLabel::Known))
    }

    /// Same two-line format the tracer is asked to produce.
    pub fn render_lists(&self) -> String {
        format!(
            "- Known knowledge components: [{}]\n- Unknown knowledge components: [{}]",
            self.known_ids().join(", "),
            self.unknown_ids().join(", ")
        )
    }

    /// Next belief from parsed tracer output. KCs the output does not
    /// mention keep their previous label; a KC listed as both known and
    /// unknown is treated as unknown.
    pub fn updated(&self, parsed: &TracedLists, turn_index: usize) -> Self {
        let mut next = self.clone();
        next.turn_index = turn_index;
        for id in &parsed.known {
            next.set(id, KcLabel::Known);
        }
        for id in &parsed.unknown {
            next.set(id, KcLabel::Unknown);
        }
        next
    }
}

/// KC ids extracted from one tracer reply.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TracedLists {
    pub known: Vec<String>,
    pub unknown: Vec<String>,
}

const KNOWN_MARKER: &str = "known knowledge components";
const UNKNOWN_MARKER: &str = "unknown knowledge components";

/// Parses the `Known knowledge components: [...]` and `Unknown knowledge
/// components: [...]` lists. Both must be present. Items are matched to KCs
/// by id first and then by normalized substring of the KC text; items that
/// match nothing are ignored.
pub fn parse_kt_output(text: &str, spec: &KnowledgeSpec) -> Option<TracedLists> {
    let lower = text.to_ascii_lowercase();
    let mut unknown_at = Vec::new();
    let mut known_at = Vec::new();
    let mut from = 0;
    while let Some(pos) = lower[from..].find(KNOWN_MARKER) {
        let at = from + pos;
        if lower[..at].ends_with("un") {
            unknown_at.push(at - 2);
        } else {
            known_at.push(at);
        }
        from = at + KNOWN_MARKER.len();
    }
    let known_pos = *known_at.first()?;
    let unknown_pos = *unknown_at.first()?;

    let section = |start: usize, marker_len: usize| -> &str {
        let body_start = start + marker_len;
        let end = [known_pos, unknown_pos]
            .into_iter()
            .filter(|&p| p > start)
            .min()
            .unwrap_or(text.len());
        &text[body_start..end]
    };
    let known = list_items(section(known_pos, KNOWN_MARKER.len()))?;
    let unknown = list_items(section(unknown_pos, UNKNOWN_MARKER.len()))?;

    Some(TracedLists {
        known: resolve_items(&known, spec),
        unknown: resolve_items(&unknown, spec),
    })
}

fn list_items(section: &str) -> Option<Vec<String>> {
    let body = match (section.find('['), section.find(']')) {
        (Some(open), Some(close)) if close > open => &section[open + 1..close],
        _ => {
            // No brackets: accept the remainder of the marker's line.
            let line = section.lines().next().unwrap_or("");
            let body = line.trim_start_matches([':', '*', ' ']).trim();
            if body.is_empty() {
                return None;
            }
            body
        }
    };
    Some(
        body.split([',', '\n', ';'])
            .map(|s| {
                s.trim()
                    .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*' | '-'))
                    .trim()
                    .to_string()
            })
            .filter(|s| !s.is_empty() && s != "..." && !s.eq_ignore_ascii_case("none"))
            .collect(),
    )
}

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn id_prefix_matches(item: &str, id: &str) -> bool {
    let item = item.to_lowercase();
    let item = item.trim_start_matches("kc").trim_start();
    match item.strip_prefix(id) {
        Some(rest) => !rest.starts_with(|c: char| c.is_ascii_digit()),
        None => false,
    }
}

fn resolve_items(items: &[String], spec: &KnowledgeSpec) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for item in items {
        let by_id = spec
            .components()
            .find(|kc| id_prefix_matches(item, &kc.kc_id.to_lowercase()));
        let found = by_id.or_else(|| {
            let needle = normalize(item);
            if needle.len() < 3 {
                return None;
            }
            spec.components().find(|kc| {
                let hay = normalize(&kc.path_or_text);
                hay.len() >= 3 && (hay.contains(&needle) || needle.contains(&hay))
            })
        });
        if let Some(kc) = found {
            if !out.contains(&kc.kc_id) {
                out.push(kc.kc_id.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DepType;

    fn spec() -> KnowledgeSpec {
        KnowledgeSpec {
            task_id: "t".into(),
            code_contexts: String::new(),
            dependencies: vec![
                KnowledgeComponent::dependency(1, "pkg.utils.load_config", DepType::CrossFile),
                KnowledgeComponent::dependency(2, "pkg.core.Engine.run", DepType::IntraClass),
            ],
            solution_steps: vec![KnowledgeComponent::solution_step(
                1,
                "Validate the input path",
            )],
        }
    }

    #[test]
    fn parses_id_lists() {
        let out =
            "Known knowledge components: [dep:1]\nUnknown knowledge components: [dep:2, step:1]";
        let p = parse_kt_output(out, &spec()).unwrap();
        assert_eq!(p.known, ["dep:1"]);
        assert_eq!(p.unknown, ["dep:2", "step:1"]);
        let b = KnowledgeBelief::initial(&spec()).updated(&p, 2);
        assert_eq!(b.get("dep:1"), Some(KcLabel::Known));
        assert_eq!(b.get("dep:2"), Some(KcLabel::Unknown));
        assert_eq!(b.get("step:1"), Some(KcLabel::Unknown));
        assert!(b.is_partition_of(&spec()));
    }

    #[test]
    fn omitted_components_inherit() {
        let mut prev = KnowledgeBelief::initial(&spec());
        prev.set("step:1", KcLabel::Known);
        let out = "- Known knowledge components: [dep:1]\n- Unknown knowledge components: [dep:2]";
        let p = parse_kt_output(out, &spec()).unwrap();
        let b = prev.updated(&p, 3);
        assert_eq!(b.get("step:1"), Some(KcLabel::Known));
        assert_eq!(b.turn_index, 3);
    }

    #[test]
    fn fuzzy_names_and_formatting() {
        let out = "**Known Knowledge Components:** [`load_config`, \"validate the input path\"]\n\
                   **Unknown Knowledge Components:** [pkg.core.Engine.run]";
        let p = parse_kt_output(out, &spec()).unwrap();
        assert_eq!(p.known, ["dep:1", "step:1"]);
        assert_eq!(p.unknown, ["dep:2"]);
    }

    #[test]
    fn id_with_description_and_no_false_prefix() {
        let mut s = spec();
        for i in 3..=10 {
            s.dependencies.push(KnowledgeComponent::dependency(
                i,
                format!("pkg.m.f{i}"),
                DepType::IntraFile,
            ));
        }
        let out = "Known knowledge components: [dep:10 (pkg.m.f10), dep:1: load config]\nUnknown knowledge components: []";
        let p = parse_kt_output(out, &s).unwrap();
        assert_eq!(p.known, ["dep:10", "dep:1"]);
        assert!(p.unknown.is_empty());
    }

    #[test]
    fn both_lists_required() {
        assert!(parse_kt_output("Known knowledge components: [dep:1]", &spec()).is_none());
        assert!(parse_kt_output("I think the student is doing fine.", &spec()).is_none());
    }

    #[test]
    fn conflicting_labels_resolve_to_unknown() {
        let out =
            "Known knowledge components: [dep:1, dep:2]\nUnknown knowledge components: [dep:2]";
        let p = parse_kt_output(out, &spec()).unwrap();
        let b = KnowledgeBelief::initial(&spec()).updated(&p, 1);
        assert_eq!(b.known_ids(), ["dep:1"]);
    }

    #[test]
    fn renders_lists() {
        let mut b = KnowledgeBelief::initial(&spec());
        b.set("dep:1", KcLabel::Known);
        assert_eq!(
            b.render_lists(),
            "- Known knowledge components: [dep:1]\n- Unknown knowledge components: [dep:2, step:1]"
        );
    }
}

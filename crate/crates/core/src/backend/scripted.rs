//! Deterministic replay backend.
//!
//! Fixtures are JSONL records `{role, turn, texts}` with optional `task_id`,
//! `level` and `repeat` fields. A call is served from the most specific
//! matching key: task and level first, then task only, level only, and
//! finally the bare role. Within each of those, an exact turn match beats a
//! record without `turn`. Plain records are consumed in order; `repeat`
//! records cycle forever.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::message::{
    estimate_usage, CallContext, CallRole, ChatMessage, Completion, SamplingParams,
};
use super::ChatBackend;
use crate::domain::StudentLevel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub role: CallRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<StudentLevel>,
    pub texts: Vec<String>,
    #[serde(default)]
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ScriptKey {
    role: CallRole,
    turn: Option<usize>,
    task_id: Option<String>,
    level: Option<StudentLevel>,
}

#[derive(Debug, Default)]
struct ScriptQueue {
    once: VecDeque<String>,
    cycle: Vec<String>,
    cursor: usize,
}

impl ScriptQueue {
    fn available(&self) -> usize {
        if self.cycle.is_empty() {
            self.once.len()
        } else {
            usize::MAX
        }
    }

    fn take(&mut self, n: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if let Some(t) = self.once.pop_front() {
                out.push(t);
            } else {
                out.push(self.cycle[self.cursor % self.cycle.len()].clone());
                self.cursor += 1;
            }
        }
        out
    }
}

#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    native_n: bool,
    queues: Mutex<HashMap<ScriptKey, ScriptQueue>>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            native_n: true,
            queues: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_records(
        name: impl Into<String>,
        records: impl IntoIterator<Item = ScriptRecord>,
    ) -> Self {
        let backend = Self::new(name);
        for record in records {
            backend.push_record(record);
        }
        backend
    }

    pub fn load(name: impl Into<String>, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading script {}", path.display()), e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ScriptRecord = serde_json::from_str(line)
                .map_err(|e| Error::json(format!("{}:{}", path.display(), lineno + 1), e))?;
            records.push(record);
        }
        Ok(Self::from_records(name, records))
    }

    /// Serves `n > 1` requests as n separate calls. Only meaningful to
    /// exercise the fan-out path; replay order then depends on scheduling.
    pub fn without_native_n(mut self) -> Self {
        self.native_n = false;
        self
    }

    pub fn push_record(&self, record: ScriptRecord) {
        let key = ScriptKey {
            role: record.role,
            turn: record.turn,
            task_id: record.task_id,
            level: record.level,
        };
        let mut queues = self.queues.lock().expect("script lock poisoned");
        let queue = queues.entry(key).or_default();
        if record.repeat {
            queue.cycle.extend(record.texts);
        } else {
            queue.once.extend(record.texts);
        }
    }

    /// Queues texts for `role` at `turn` for any task.
    pub fn push(&self, role: CallRole, turn: usize, texts: &[&str]) {
        self.push_record(ScriptRecord {
            role,
            turn: Some(turn),
            task_id: None,
            level: None,
            texts: texts.iter().map(|s| s.to_string()).collect(),
            repeat: false,
        });
    }

    /// Texts served for `role` whenever nothing more specific matches.
    pub fn push_repeating(&self, role: CallRole, texts: &[&str]) {
        self.push_record(ScriptRecord {
            role,
            turn: None,
            task_id: None,
            level: None,
            texts: texts.iter().map(|s| s.to_string()).collect(),
            repeat: true,
        });
    }

    fn candidate_keys(call: &CallContext) -> Vec<ScriptKey> {
        let task = Some(call.task_id.clone());
        let scopes = [
            (task.clone(), call.level),
            (task, None),
            (None, call.level),
            (None, None),
        ];
        let mut keys = Vec::with_capacity(8);
        for (task_id, level) in scopes {
            if task_id.is_some() && call.task_id.is_empty() {
                continue;
            }
            for turn in [Some(call.turn), None] {
                keys.push(ScriptKey {
                    role: call.role,
                    turn,
                    task_id: task_id.clone(),
                    level,
                });
            }
        }
        keys.dedup();
        keys
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn native_n(&self) -> bool {
        self.native_n
    }

    fn chat(
        &self,
        call: &CallContext,
        messages: &[ChatMessage],
        params: &SamplingParams,
    ) -> Result<Completion> {
        let mut queues = self.queues.lock().expect("script lock poisoned");
        let key = Self::candidate_keys(call)
            .into_iter()
            .find(|k| queues.get(k).is_some_and(|q| q.available() > 0))
            .ok_or_else(|| Error::ScriptExhausted {
                role: call.role.to_string(),
                turn: call.turn,
            })?;
        let queue = queues.get_mut(&key).expect("key found above");
        if queue.available() < params.n {
            return Err(Error::ScriptExhausted {
                role: call.role.to_string(),
                turn: call.turn,
            });
        }
        let texts = queue.take(params.n);
        drop(queues);
        let usage = estimate_usage(messages, &texts);
        Ok(Completion { texts, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msgs() -> Vec<ChatMessage> {
        vec![ChatMessage::system("you are a tutor")]
    }

    fn call(role: CallRole, turn: usize) -> CallContext {
        CallContext::new(role, turn, "task")
    }

    #[test]
    fn replays_queue_then_exhausts() {
        let b = ScriptedBackend::new("s");
        b.push(CallRole::Tutor, 1, &["hello"]);
        let c = b
            .chat(
                &call(CallRole::Tutor, 1),
                &msgs(),
                &SamplingParams::default(),
            )
            .unwrap();
        assert_eq!(c.texts, ["hello"]);
        assert!(c.usage.estimated);
        let err = b.chat(
            &call(CallRole::Tutor, 1),
            &msgs(),
            &SamplingParams::default(),
        );
        assert!(matches!(err, Err(Error::ScriptExhausted { .. })));
    }

    #[test]
    fn fan_out_fixture_in_order() {
        let b = ScriptedBackend::new("s");
        b.push(CallRole::Tutor, 2, &["a", "b", "c", "d", "e"]);
        let c = b
            .chat(
                &call(CallRole::Tutor, 2),
                &msgs(),
                &SamplingParams::default().with_n(5),
            )
            .unwrap();
        assert_eq!(c.texts, ["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn short_queue_is_exhausted() {
        let b = ScriptedBackend::new("s");
        b.push(CallRole::Tutor, 1, &["a", "b"]);
        let err = b.chat(
            &call(CallRole::Tutor, 1),
            &msgs(),
            &SamplingParams::default().with_n(3),
        );
        assert!(matches!(err, Err(Error::ScriptExhausted { .. })));
    }

    #[test]
    fn specific_keys_win_and_repeat_cycles() {
        let b = ScriptedBackend::new("s");
        b.push_repeating(CallRole::Manager, &["VERDICT: CONTINUE"]);
        b.push_record(ScriptRecord {
            role: CallRole::Manager,
            turn: Some(2),
            task_id: Some("task".into()),
            level: Some(StudentLevel::Low),
            texts: vec!["VERDICT: GOAL_ACHIEVED".into()],
            repeat: false,
        });
        let low = |turn| call(CallRole::Manager, turn).with_level(StudentLevel::Low);
        let p = SamplingParams::default();
        assert_eq!(
            b.chat(&low(1), &msgs(), &p).unwrap().texts,
            ["VERDICT: CONTINUE"]
        );
        assert_eq!(
            b.chat(&low(2), &msgs(), &p).unwrap().texts,
            ["VERDICT: GOAL_ACHIEVED"]
        );
        assert_eq!(
            b.chat(&low(2), &msgs(), &p).unwrap().texts,
            ["VERDICT: CONTINUE"]
        );
        let high = call(CallRole::Manager, 2).with_level(StudentLevel::High);
        assert_eq!(
            b.chat(&high, &msgs(), &p).unwrap().texts,
            ["VERDICT: CONTINUE"]
        );
    }

    #[test]
    fn identical_sequences_are_deterministic() {
        let make = || {
            let b = ScriptedBackend::new("s");
            b.push_repeating(CallRole::Student, &["x y", "z"]);
            b
        };
        let (a, b) = (make(), make());
        for turn in 1..5 {
            let p = SamplingParams::default().with_n(turn);
            assert_eq!(
                a.chat(&call(CallRole::Student, turn), &msgs(), &p).unwrap(),
                b.chat(&call(CallRole::Student, turn), &msgs(), &p).unwrap()
            );
        }
    }

    #[test]
    fn loads_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.jsonl");
        fs::write(
            &path,
            "{\"role\":\"tutor\",\"turn\":1,\"texts\":[\"hi\"]}\n\n{\"role\":\"student\",\"texts\":[\"ok\"],\"repeat\":true}\n",
        )
        .unwrap();
        let b = ScriptedBackend::load("s", &path).unwrap();
        let p = SamplingParams::default();
        assert_eq!(
            b.chat(&call(CallRole::Tutor, 1), &msgs(), &p)
                .unwrap()
                .texts,
            ["hi"]
        );
        assert_eq!(
            b.chat(&call(CallRole::Student, 7), &msgs(), &p)
                .unwrap()
                .texts,
            ["ok"]
        );
    }
}

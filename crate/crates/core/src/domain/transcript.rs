use std::fmt;
use std::io::{BufRead, Write};
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StudentProfile;
use crate::agents::{KnowledgeBelief, ManagerDecision};
use crate::error::{Error, Result};

fn is_false(b: &bool) -> bool {
    !*b
}

/// Prompt and completion token counts. `estimated` is set when any part of
/// the count came from the word-count heuristic instead of the provider.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub estimated: bool,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
            estimated: false,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
            estimated: self.estimated || rhs.estimated,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> TokenUsage {
        iter.fold(TokenUsage::default(), Add::add)
    }
}

/// Per-role breakdown of the tokens spent in one turn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnUsage {
    pub tutor: TokenUsage,
    pub tracer: TokenUsage,
    pub student: TokenUsage,
    pub manager: TokenUsage,
}

impl TurnUsage {
    pub fn total(&self) -> TokenUsage {
        self.tutor + self.tracer + self.student + self.manager
    }

    /// Tokens spent on the tutor side (generation plus knowledge tracing).
    pub fn tutor_side(&self) -> TokenUsage {
        self.tutor + self.tracer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub index: usize,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    /// 1-based.
    pub index: usize,
    pub tutor_utterance: String,
    pub student_utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief_snapshot: Option<KnowledgeBelief>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<ScoredCandidate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_candidate: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manager: Option<ManagerDecision>,
    pub token_usage: TurnUsage,
    /// Non-fatal events: parse fallbacks, clamped scores, dropped candidates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TutorMethod {
    Vanilla,
    Traver,
}

impl TutorMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TutorMethod::Vanilla => "vanilla",
            TutorMethod::Traver => "traver",
        }
    }
}

impl fmt::Display for TutorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TutorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vanilla" => Ok(TutorMethod::Vanilla),
            "traver" => Ok(TutorMethod::Traver),
            other => Err(Error::InvalidConfig(format!(
                "unknown tutor method `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ManagerGoalAchieved,
    MaxTurns,
    Aborted,
}

/// The session parameters a transcript was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub max_turns: usize,
    pub candidates: usize,
    pub method: TutorMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub task_id: String,
    pub profile: StudentProfile,
    pub turns: Vec<DialogueTurn>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub config: SessionSnapshot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TranscriptHeader {
    task_id: String,
    profile: StudentProfile,
    termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    abort_reason: Option<String>,
    config: SessionSnapshot,
    turns: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TranscriptLine {
    Header(TranscriptHeader),
    Turn(DialogueTurn),
}

impl Transcript {
    pub fn total_usage(&self) -> TokenUsage {
        self.turns.iter().map(|t| t.token_usage.total()).sum()
    }

    pub fn tutor_usage(&self) -> TokenUsage {
        self.turns.iter().map(|t| t.token_usage.tutor_side()).sum()
    }

    /// Checks the structural invariants: bounded length, contiguous 1-based
    /// turn indices, and completed turns.
    pub fn validate(&self) -> Result<()> {
        if self.turns.len() > self.config.max_turns {
            return Err(Error::InvalidInput(format!(
                "transcript for {} has {} turns, cap is {}",
                self.task_id,
                self.turns.len(),
                self.config.max_turns
            )));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.index != i + 1 {
                return Err(Error::InvalidInput(format!(
                    "transcript for {}: turn #{} has index {}",
                    self.task_id,
                    i + 1,
                    turn.index
                )));
            }
            if turn.tutor_utterance.is_empty() || turn.student_utterance.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "transcript for {}: turn {} is incomplete",
                    self.task_id, turn.index
                )));
            }
        }
        Ok(())
    }

    /// JSONL: one header record followed by one record per turn.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = TranscriptLine::Header(TranscriptHeader {
            task_id: self.task_id.clone(),
            profile: self.profile.clone(),
            termination: self.termination,
            abort_reason: self.abort_reason.clone(),
            config: self.config,
            turns: self.turns.len(),
        });
        write_line(&mut out, &header)?;
        for turn in &self.turns {
            write_line(&mut out, &TranscriptLine::Turn(turn.clone()))?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Transcript> {
        let mut header: Option<TranscriptHeader> = None;
        let mut turns = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("reading transcript", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TranscriptLine = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("transcript line {}", lineno + 1), e))?;
            match record {
                TranscriptLine::Header(h) if header.is_none() => header = Some(h),
                TranscriptLine::Header(_) => {
                    return Err(Error::InvalidInput(format!(
                        "transcript line {}: duplicate header",
                        lineno + 1
                    )))
                }
                TranscriptLine::Turn(t) => turns.push(t),
            }
        }
        let header =
            header.ok_or_else(|| Error::InvalidInput("transcript has no header record".into()))?;
        if header.turns != turns.len() {
            return Err(Error::InvalidInput(format!(
                "transcript header announces {} turns, found {}",
                header.turns,
                turns.len()
            )));
        }
        Ok(Transcript {
            task_id: header.task_id,
            profile: header.profile,
            turns,
            termination: header.termination,
            abort_reason: header.abort_reason,
            config: header.config,
        })
    }
}

fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Error::json("writing transcript", e))?;
    out.write_all(b"\n")
        .map_err(|e| Error::io("writing transcript", e))
}

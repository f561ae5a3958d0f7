use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};

/// Everything a verifier sees about one candidate utterance.
#[derive(Debug, Clone, Copy)]
pub struct ScoreRequest<'a> {
    pub task_id: &'a str,
    /// Target task text.
    pub task: &'a str,
    /// Rendered dialogue before the candidate's turn.
    pub context: &'a str,
    pub candidate: &'a str,
    pub turn: usize,
    pub candidate_index: usize,
}

pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;

    /// Raw verifier output; may fall outside [0, 1].
    fn raw_score(&self, request: &ScoreRequest<'_>) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    /// Raw value when it had to be clamped.
    pub clamped_from: Option<f64>,
}

/// Scores one candidate, clamping out-of-range values into [0, 1].
pub fn score(scorer: &dyn Scorer, request: &ScoreRequest<'_>) -> Result<Score> {
    let raw = scorer.raw_score(request)?;
    if raw.is_nan() {
        return Err(Error::ScorerUnavailable(format!(
            "{} returned NaN for turn {} candidate {}",
            scorer.name(),
            request.turn,
            request.candidate_index
        )));
    }
    if (0.0..=1.0).contains(&raw) {
        return Ok(Score {
            value: raw,
            clamped_from: None,
        });
    }
    warn!(
        scorer = scorer.name(),
        raw, "verifier score outside [0, 1], clamping"
    );
    Ok(Score {
        value: raw.clamp(0.0, 1.0),
        clamped_from: Some(raw),
    })
}

/// Fixture record `{turn, candidate_index, score}` with an optional
/// `task_id` restricting it to one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub turn: usize,
    pub candidate_index: usize,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

#[derive(Debug, Default)]
pub struct ScriptedScorer {
    scores: HashMap<(Option<String>, usize, usize), f64>,
    fallback: Option<f64>,
}

impl ScriptedScorer {
    pub fn new(records: impl IntoIterator<Item = ScoreRecord>) -> Self {
        Self {
            scores: records
                .into_iter()
                .map(|r| ((r.task_id, r.turn, r.candidate_index), r.score))
                .collect(),
            fallback: None,
        }
    }

    /// Score used for (turn, candidate) pairs the fixture does not list.
    pub fn with_fallback(mut self, score: f64) -> Self {
        self.fallback = Some(score);
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading scores {}", path.display()), e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(line)
                    .map_err(|e| Error::json(format!("{}:{}", path.display(), lineno + 1), e))?,
            );
        }
        Ok(Self::new(records))
    }
}

impl Scorer for ScriptedScorer {
    fn name(&self) -> &str {
        "scripted"
    }

    fn raw_score(&self, r: &ScoreRequest<'_>) -> Result<f64> {
        self.scores
            .get(&(Some(r.task_id.to_string()), r.turn, r.candidate_index))
            .or_else(|| self.scores.get(&(None, r.turn, r.candidate_index)))
            .copied()
            .or(self.fallback)
            .ok_or_else(|| {
                Error::ScorerUnavailable(format!(
                    "no scripted score for turn {} candidate {}",
                    r.turn, r.candidate_index
                ))
            })
    }
}

#[derive(Debug, Serialize)]
pub struct ScoreWireRequest<'a> {
    pub task: &'a str,
    pub context: &'a str,
    pub candidate: &'a str,
}

#[derive(Debug, Deserialize)]
struct ScoreWireResponse {
    score: f64,
}

/// Remote verifier: POST `{task, context, candidate}`, expects `{score}`.
pub struct HttpScorer {
    url: String,
    client: Client,
    max_retries: u32,
    backoff: Duration,
}

impl HttpScorer {
    pub fn new(url: impl Into<String>, timeout: Duration, max_retries: u32) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::ScorerUnavailable(format!("building HTTP client: {e}")))?;
        Ok(Self {
            url: url.into(),
            client,
            max_retries,
            backoff: Duration::from_millis(250),
        })
    }

    fn attempt(&self, body: &ScoreWireRequest<'_>) -> std::result::Result<f64, (bool, String)> {
        let resp = self
            .client
            .post(&self.url)
            .json(body)
            .send()
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err((true, format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err((false, format!("HTTP {status}")));
        }
        let parsed: ScoreWireResponse = resp.json().map_err(|e| (false, e.to_string()))?;
        Ok(parsed.score)
    }
}

impl Scorer for HttpScorer {
    fn name(&self) -> &str {
        &self.url
    }

    fn raw_score(&self, r: &ScoreRequest<'_>) -> Result<f64> {
        let body = ScoreWireRequest {
            task: r.task,
            context: r.context,
            candidate: r.candidate,
        };
        let mut backoff = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                thread::sleep(backoff);
                backoff = backoff.saturating_mul(2);
            }
            match self.attempt(&body) {
                Ok(s) => return Ok(s),
                Err((true, reason)) => last = reason,
                Err((false, reason)) => return Err(Error::ScorerUnavailable(reason)),
            }
        }
        Err(Error::ScorerUnavailable(format!("{}: {last}", self.url)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(f64);

    impl Scorer for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn raw_score(&self, _: &ScoreRequest<'_>) -> Result<f64> {
            Ok(self.0)
        }
    }

    fn req(turn: usize, idx: usize) -> ScoreRequest<'static> {
        ScoreRequest {
            task_id: "t",
            task: "def f(): ...",
            context: "",
            candidate: "hi",
            turn,
            candidate_index: idx,
        }
    }

    #[test]
    fn clamps_out_of_range() {
        let s = score(&Fixed(1.3), &req(1, 0)).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.clamped_from, Some(1.3));
        let s = score(&Fixed(-0.1), &req(1, 0)).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(score(&Fixed(0.7), &req(1, 0)).unwrap().clamped_from, None);
        assert!(score(&Fixed(f64::NAN), &req(1, 0)).is_err());
    }

    #[test]
    fn scripted_lookup() {
        let s = ScriptedScorer::new([
            ScoreRecord {
                turn: 1,
                candidate_index: 1,
                score: 0.8,
                task_id: None,
            },
            ScoreRecord {
                turn: 1,
                candidate_index: 1,
                score: 0.2,
                task_id: Some("t".into()),
            },
            ScoreRecord {
                turn: 1,
                candidate_index: 0,
                score: 0.1,
                task_id: None,
            },
        ]);
        assert_eq!(score(&s, &req(1, 0)).unwrap().value, 0.1);
        assert_eq!(score(&s, &req(1, 1)).unwrap().value, 0.2);
        assert!(matches!(
            score(&s, &req(2, 0)),
            Err(Error::ScorerUnavailable(_))
        ));
        let s = s.with_fallback(0.5);
        assert_eq!(score(&s, &req(2, 0)).unwrap().value, 0.5);
    }
}

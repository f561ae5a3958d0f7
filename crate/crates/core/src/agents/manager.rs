use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Continue,
    GoalAchieved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagerDecision {
    pub verdict: Verdict,
    pub rationale: String,
    /// Set when no parseable verdict was produced and `continue` was assumed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

impl ManagerDecision {
    pub fn fallback(rationale: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::Continue,
            rationale: rationale.into(),
            fallback: true,
        }
    }
}

/// Finds the last `VERDICT: GOAL_ACHIEVED` / `VERDICT: CONTINUE` line.
pub fn parse_verdict(text: &str) -> Option<ManagerDecision> {
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate().rev() {
        let upper = line.to_ascii_uppercase();
        let Some(pos) = upper.find("VERDICT") else {
            continue;
        };
        let value: String = upper[pos + "VERDICT".len()..]
            .trim_start_matches(|c: char| c == ':' || c == '*' || c.is_whitespace())
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        let verdict = if value.starts_with("GOAL_ACHIEVED") {
            Verdict::GoalAchieved
        } else if value.starts_with("CONTINUE") {
            Verdict::Continue
        } else {
            continue;
        };
        let rationale = lines
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, l)| *l)
            .collect::<Vec<_>>()
            .join("\n")
            .trim()
            .to_string();
        return Some(ManagerDecision {
            verdict,
            rationale,
            fallback: false,
        });
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_markers() {
        let d = parse_verdict("VERDICT: GOAL_ACHIEVED").unwrap();
        assert_eq!(d.verdict, Verdict::GoalAchieved);
        let d = parse_verdict("The student still lacks dep:2.\nVERDICT: CONTINUE").unwrap();
        assert_eq!(d.verdict, Verdict::Continue);
        assert_eq!(d.rationale, "The student still lacks dep:2.");
    }

    #[test]
    fn tolerant_formatting_last_wins() {
        let d = parse_verdict("**Verdict:** goal achieved").unwrap();
        assert_eq!(d.verdict, Verdict::GoalAchieved);
        let d =
            parse_verdict("VERDICT: CONTINUE\nOn reflection...\nVERDICT: GOAL_ACHIEVED").unwrap();
        assert_eq!(d.verdict, Verdict::GoalAchieved);
    }

    #[test]
    fn garbage_is_none() {
        assert!(parse_verdict("looks good to me").is_none());
        assert!(parse_verdict("VERDICT: maybe").is_none());
    }
}

use crate::error::{Error, Result};

pub const DEFAULT_COGNITIVE_LOAD_WORDS: usize = 60;

/// Keeps only the last `max_words` whitespace-delimited words. Text already
/// within the limit is returned unchanged.
pub fn truncate_cognitive_load(utterance: &str, max_words: usize) -> String {
    let words: Vec<&str> = utterance.split_whitespace().collect();
    if words.len() <= max_words {
        return utterance.to_string();
    }
    words[words.len() - max_words..].join(" ")
}

/// Pulls the program out of a model completion: the first fenced block,
/// otherwise everything from the line defining `function_name`, otherwise
/// the whole text.
pub fn extract_code(completion: &str, function_name: &str) -> Result<String> {
    if completion.trim().is_empty() {
        return Err(Error::EmptyProgram);
    }
    let code = fenced_block(completion)
        .or_else(|| from_definition(completion, function_name))
        .unwrap_or(completion);
    if code.trim().is_empty() {
        return Err(Error::EmptyProgram);
    }
    Ok(code.trim_end().to_string() + "\n")
}

fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    // The info string (e.g. "python") runs to the end of the opening line.
    let body_start = after.find('\n').map(|i| i + 1)?;
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

fn from_definition<'a>(text: &'a str, function_name: &str) -> Option<&'a str> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let t = line.trim_start();
        let t = t.strip_prefix("async ").unwrap_or(t);
        if let Some(rest) = t.strip_prefix("def ") {
            if rest
                .trim_start()
                .strip_prefix(function_name)
                .is_some_and(|r| r.trim_start().starts_with('('))
            {
                return Some(&text[offset..]);
            }
        }
        offset += line.len();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> String {
        (1..=n)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn truncation_boundaries() {
        assert_eq!(truncate_cognitive_load(&numbered(59), 60), numbered(59));
        assert_eq!(truncate_cognitive_load(&numbered(60), 60), numbered(60));
        let out = truncate_cognitive_load(&numbered(61), 60);
        assert_eq!(out.split_whitespace().count(), 60);
        assert!(out.starts_with("w2 ") && out.ends_with(" w61"));
    }

    #[test]
    fn truncation_normalizes_spacing_only_when_cutting() {
        assert_eq!(truncate_cognitive_load("a  b\nc", 3), "a  b\nc");
        assert_eq!(truncate_cognitive_load("a  b\nc", 2), "b c");
    }

    #[test]
    fn extracts_fenced_block() {
        let text = "Here you go:\n```python\ndef f(x):\n    return x\n```\nDone.";
        assert_eq!(
            extract_code(text, "f").unwrap(),
            "def f(x):\n    return x\n"
        );
    }

    #[test]
    fn extracts_from_definition_line() {
        let text = "Sure.\n\ndef helper():\n    pass\ndef f(x):\n    return 1\n";
        assert_eq!(
            extract_code(text, "f").unwrap(),
            "def f(x):\n    return 1\n"
        );
        let text = "    def  f (self):\n        return 2";
        assert_eq!(
            extract_code(text, "f").unwrap(),
            "    def  f (self):\n        return 2\n"
        );
    }

    #[test]
    fn falls_back_to_raw_text() {
        assert_eq!(extract_code("return 1", "f").unwrap(), "return 1\n");
        assert!(matches!(
            extract_code("  \n", "f"),
            Err(Error::EmptyProgram)
        ));
        assert!(matches!(
            extract_code("```\n```", "f"),
            Err(Error::EmptyProgram)
        ));
    }
}

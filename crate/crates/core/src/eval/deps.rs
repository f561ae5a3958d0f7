//! Dependency extraction from generated programs.
//!
//! The built-in extractor scans Python source lexically, skipping comments
//! and string literals. It collects dotted chains that are called
//! (`a.b.helper(...)`) or accessed as attributes (`self.config.timeout`,
//! which also yields `self.config`); bare names are ignored. Import aliases are expanded, so after
//! `import numpy as np` the chain `np.array` becomes `numpy.array`.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::process::{Command, Stdio};

use crate::error::{Error, Result};

pub trait DependencyExtractor: Send + Sync {
    /// Dotted chains referenced by the program, each split into segments.
    fn chains(&self, program: &str) -> Result<Vec<Vec<String>>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalExtractor;

/// Runs a shell command with the program on stdin; every non-empty stdout
/// line is one dotted path.
#[derive(Debug, Clone)]
pub struct CommandExtractor {
    pub command: String,
}

impl DependencyExtractor for CommandExtractor {
    fn chains(&self, program: &str) -> Result<Vec<Vec<String>>> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::ExtractorError(format!("cannot start `{}`: {e}", self.command)))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let input = program.to_string();
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let output = child
            .wait_with_output()
            .map_err(|e| Error::ExtractorError(format!("`{}`: {e}", self.command)))?;
        let _ = writer.join();
        if !output.status.success() {
            return Err(Error::ExtractorError(format!(
                "`{}` exited with {}: {}",
                self.command,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        Ok(String::from_utf8_lossy(&output.stdout)
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.split('.').map(str::to_string).collect())
            .collect())
    }
}

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Dot,
    Open,
    Close,
    Newline,
    Other,
}

fn tokenize(src: &str) -> Vec<Tok> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '\n' => {
                toks.push(Tok::Newline);
                i += 1;
            }
            '"' | '\'' => i = skip_string(&chars, i),
            '.' => {
                toks.push(Tok::Dot);
                i += 1;
            }
            '(' => {
                toks.push(Tok::Open);
                i += 1;
            }
            ')' | ']' => {
                toks.push(Tok::Close);
                i += 1;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                // String prefixes such as f"..." or rb'...'.
                if i < chars.len()
                    && (chars[i] == '"' || chars[i] == '\'')
                    && word.len() <= 2
                    && word.chars().all(|c| "rRbBuUfF".contains(c))
                {
                    i = skip_string(&chars, i);
                } else {
                    toks.push(Tok::Ident(word));
                }
            }
            c if c.is_ascii_digit() => {
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '.' || chars[i] == '_')
                {
                    i += 1;
                }
                toks.push(Tok::Other);
            }
            c if c.is_whitespace() => i += 1,
            _ => {
                toks.push(Tok::Other);
                i += 1;
            }
        }
    }
    toks
}

fn skip_string(chars: &[char], start: usize) -> usize {
    let q = chars[start];
    let triple = chars.get(start + 1) == Some(&q) && chars.get(start + 2) == Some(&q);
    let mut i = start + if triple { 3 } else { 1 };
    while i < chars.len() {
        if chars[i] == '\\' {
            i += 2;
            continue;
        }
        if chars[i] == q {
            if !triple {
                return i + 1;
            }
            if chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                return i + 3;
            }
        } else if chars[i] == '\n' && !triple {
            return i;
        }
        i += 1;
    }
    i
}

fn ident(t: Option<&Tok>) -> Option<&str> {
    match t {
        Some(Tok::Ident(s)) => Some(s),
        _ => None,
    }
}

/// Reads `a.b.c` starting at `i`; returns the segments and the index after.
fn dotted(toks: &[Tok], mut i: usize) -> (Vec<String>, usize) {
    let mut segs = Vec::new();
    while let Some(s) = ident(toks.get(i)) {
        segs.push(s.to_string());
        if toks.get(i + 1) == Some(&Tok::Dot) && ident(toks.get(i + 2)).is_some() {
            i += 2;
        } else {
            i += 1;
            break;
        }
    }
    (segs, i)
}

fn import_aliases(toks: &[Tok]) -> HashMap<String, Vec<String>> {
    let mut aliases = HashMap::new();
    let mut i = 0;
    while i < toks.len() {
        let at_line_start = i == 0 || toks[i - 1] == Tok::Newline;
        match ident(toks.get(i)) {
            Some("import") if at_line_start => {
                i += 1;
                loop {
                    let (path, next) = dotted(toks, i);
                    if path.is_empty() {
                        break;
                    }
                    i = next;
                    if ident(toks.get(i)) == Some("as") {
                        if let Some(alias) = ident(toks.get(i + 1)) {
                            aliases.insert(alias.to_string(), path);
                        }
                        i += 2;
                    }
                    if toks.get(i) == Some(&Tok::Other) {
                        i += 1;
                    } else {
                        break;
                    }
                }
            }
            Some("from") if at_line_start => {
                let mut j = i + 1;
                while toks.get(j) == Some(&Tok::Dot) {
                    j += 1;
                }
                let (module, next) = dotted(toks, j);
                j = next;
                if ident(toks.get(j)) == Some("import") {
                    j += 1;
                    while j < toks.len() && toks[j] != Tok::Newline {
                        if let Some(name) = ident(toks.get(j)) {
                            let mut full = module.clone();
                            full.push(name.to_string());
                            let bound = if ident(toks.get(j + 1)) == Some("as") {
                                j += 2;
                                ident(toks.get(j)).unwrap_or(name).to_string()
                            } else {
                                name.to_string()
                            };
                            aliases.insert(bound, full);
                        }
                        j += 1;
                    }
                }
                i = j;
            }
            _ => i += 1,
        }
    }
    aliases
}

impl DependencyExtractor for LexicalExtractor {
    fn chains(&self, program: &str) -> Result<Vec<Vec<String>>> {
        let toks = tokenize(program);
        let aliases = import_aliases(&toks);
        let mut chains = Vec::new();
        let mut i = 0;
        let mut line_start = true;
        while i < toks.len() {
            match &toks[i] {
                Tok::Newline => {
                    line_start = true;
                    i += 1;
                    continue;
                }
                Tok::Ident(word) if line_start && (word == "import" || word == "from") => {
                    while i < toks.len() && toks[i] != Tok::Newline {
                        i += 1;
                    }
                    continue;
                }
                Tok::Ident(word) if word == "def" || word == "class" => {
                    // Skip the defined name.
                    i += 2;
                    line_start = false;
                    continue;
                }
                Tok::Ident(_) => {
                    // A chain continuing from a call or subscript, as in
                    // `foo().bar()`, only contributes its own segments.
                    let after_expr = i >= 1 && toks[i - 1] == Tok::Dot;
                    let (mut segs, next) = dotted(&toks, i);
                    let called = toks.get(next) == Some(&Tok::Open);
                    if !after_expr && KEYWORDS.contains(&segs[0].as_str()) {
                        segs.remove(0);
                        if segs.is_empty() {
                            i = next;
                            line_start = false;
                            continue;
                        }
                    }
                    if !after_expr {
                        if let Some(full) = aliases.get(&segs[0]) {
                            let mut expanded = full.clone();
                            expanded.extend(segs.drain(1..));
                            segs = expanded;
                        }
                    }
                    // Every attribute access along the chain counts, so
                    // `self.config.timeout` also yields `self.config`.
                    for len in 2..segs.len() {
                        chains.push(segs[..len].to_vec());
                    }
                    if called || segs.len() >= 2 {
                        chains.push(segs);
                    }
                    i = next;
                }
                _ => i += 1,
            }
            line_start = false;
        }
        Ok(chains)
    }
}

/// True when `chain` refers to the dotted `reference`: the final segments
/// agree and, if the chain names a qualifier other than `self`/`cls`, so
/// does the one before it.
pub fn chain_matches(chain: &[String], reference: &str) -> bool {
    let r: Vec<&str> = reference.split('.').collect();
    let (Some(c_last), Some(r_last)) = (chain.last(), r.last()) else {
        return false;
    };
    if c_last != r_last {
        return false;
    }
    if chain.len() >= 2 {
        let q = chain[chain.len() - 2].as_str();
        if q != "self" && q != "cls" && r.len() >= 2 {
            return q == r[r.len() - 2];
        }
    }
    true
}

/// The subset of `reference_deps` the program uses.
pub fn extract_dependencies(
    extractor: &dyn DependencyExtractor,
    program: &str,
    reference_deps: &[String],
) -> Result<BTreeSet<String>> {
    if reference_deps.is_empty() {
        return Err(Error::InvalidSpec("no reference dependencies".into()));
    }
    let chains = extractor.chains(program)?;
    Ok(reference_deps
        .iter()
        .filter(|r| chains.iter().any(|c| chain_matches(c, r)))
        .cloned()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matched(program: &str, refs: &[&str]) -> Vec<String> {
        let refs: Vec<String> = refs.iter().map(|s| s.to_string()).collect();
        extract_dependencies(&LexicalExtractor, program, &refs)
            .unwrap()
            .into_iter()
            .collect()
    }

    #[test]
    fn suffix_rule() {
        assert_eq!(
            matched("x = a.b.helper(1)\n", &["pkg.mod.a.b.helper"]),
            ["pkg.mod.a.b.helper"]
        );
        assert!(matched("x = c.helper(1)\n", &["pkg.mod.b.helper"]).is_empty());
        assert_eq!(
            matched("helper()\n", &["pkg.mod.b.helper"]),
            ["pkg.mod.b.helper"]
        );
    }

    #[test]
    fn calls_required_for_bare_names() {
        assert!(matched("def f():\n    return 1\n", &["x.y.z"]).is_empty());
        assert!(matched("z = 3\nprint(z)\n", &["x.y.z"]).is_empty());
    }

    #[test]
    fn attributes_self_and_aliases() {
        let program = "import pkg.storage as st\nfrom pkg.util import load as ld\n\
                       def f(self):\n    # self.ignored()\n    s = \"helper()\"\n\
                       st.save(self.config.timeout)\n    return ld(self._run())\n";
        let refs = [
            "pkg.storage.save",
            "pkg.util.load",
            "pkg.core.Engine._run",
            "pkg.core.Engine.config",
            "pkg.core.Engine.ignored",
            "pkg.text.helper",
        ];
        assert_eq!(
            matched(program, &refs),
            [
                "pkg.core.Engine._run",
                "pkg.core.Engine.config",
                "pkg.storage.save",
                "pkg.util.load"
            ]
        );
    }

    #[test]
    fn chained_calls_and_definitions() {
        let program = "def run(x):\n    return make().build()\n";
        assert_eq!(
            matched(program, &["m.Builder.build", "m.run"]),
            ["m.Builder.build"]
        );
    }

    #[test]
    fn command_extractor_contract() {
        let ex = CommandExtractor {
            command: "cat >/dev/null; printf 'pkg.a.f\\n\\npkg.b.g\\n'".into(),
        };
        let refs = vec!["root.pkg.a.f".to_string(), "pkg.c.g".to_string()];
        let got = extract_dependencies(&ex, "anything", &refs).unwrap();
        assert_eq!(got.into_iter().collect::<Vec<_>>(), ["root.pkg.a.f"]);
        let bad = CommandExtractor {
            command: "exit 3".into(),
        };
        assert!(matches!(bad.chains("x"), Err(Error::ExtractorError(_))));
    }
}

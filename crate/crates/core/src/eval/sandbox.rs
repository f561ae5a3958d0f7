//! Runs a task's unit tests against a candidate program.
//!
//! The program replaces the target function in its source file, the test
//! command runs in its own process group from the repository root, and the
//! file is restored afterwards. Files and directories the run created are
//! removed, so the checkout ends up byte-identical. Runs against the same
//! repository are serialized.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, LazyLock, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{debug, warn};
use wait_timeout::ChildExt;
use walkdir::WalkDir;

use crate::domain::CodingTask;
use crate::error::{Error, Result};

pub const DEFAULT_TEST_TIMEOUT: Duration = Duration::from_secs(60);

/// Syntax check used for python interpreters when the task sets none.
const PYTHON_COMPILE_CHECK: &str =
    "{interpreter} -c \"import sys; compile(open(sys.argv[1]).read(), sys.argv[1], 'exec')\" {file}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestCause {
    Passed,
    TestFailure,
    Crash,
    Timeout,
    EmptyProgram,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub passed: bool,
    pub cause: TestCause,
    /// Tail of the captured output, for diagnostics only.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl TestOutcome {
    fn new(cause: TestCause, detail: String) -> Self {
        Self {
            passed: cause == TestCause::Passed,
            cause,
            detail,
        }
    }

    pub fn empty_program() -> Self {
        Self::new(TestCause::EmptyProgram, String::new())
    }
}

static REPO_LOCKS: LazyLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

fn repo_lock(repo: &Path) -> Arc<Mutex<()>> {
    let mut locks = REPO_LOCKS.lock().unwrap_or_else(|e| e.into_inner());
    locks.entry(repo.to_path_buf()).or_default().clone()
}

/// Content hash of a directory tree: relative paths, file bytes, and empty
/// directories, in sorted order.
pub fn repo_hash(root: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry =
            entry.map_err(|e| Error::io(format!("walking {}", root.display()), e.into()))?;
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let rel = rel.to_string_lossy();
        if entry.file_type().is_dir() {
            hasher.update(b"d\0");
            hasher.update(rel.as_bytes());
            hasher.update(b"\0");
        } else {
            let bytes = fs::read(entry.path())
                .map_err(|e| Error::io(format!("reading {}", entry.path().display()), e))?;
            hasher.update(b"f\0");
            hasher.update(rel.as_bytes());
            hasher.update(b"\0");
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    }
    Ok(hex(&hasher.finalize()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn tree_entries(root: &Path) -> BTreeSet<PathBuf> {
    WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .map(|e| e.into_path())
        .collect()
}

/// Restores the patched file and removes anything new when dropped.
struct RepoGuard {
    root: PathBuf,
    file: PathBuf,
    original: Vec<u8>,
    before: BTreeSet<PathBuf>,
}

impl Drop for RepoGuard {
    fn drop(&mut self) {
        if let Err(e) = fs::write(&self.file, &self.original) {
            warn!(file = %self.file.display(), error = %e, "failed to restore source file");
        }
        let created: Vec<PathBuf> = tree_entries(&self.root)
            .into_iter()
            .filter(|p| !self.before.contains(p))
            .collect();
        // Reverse order visits children before their parent directories.
        for path in created.iter().rev() {
            let res = if path.is_dir() {
                fs::remove_dir_all(path)
            } else {
                fs::remove_file(path)
            };
            if let Err(e) = res {
                if e.kind() != std::io::ErrorKind::NotFound {
                    warn!(path = %path.display(), error = %e, "failed to remove test artifact");
                }
            }
        }
    }
}

fn dedent(text: &str) -> String {
    let indent = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    text.lines()
        .map(|l| {
            if l.len() >= indent {
                &l[indent..]
            } else {
                l.trim_start()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn indent(text: &str, prefix: &str) -> String {
    text.lines()
        .map(|l| {
            if l.trim().is_empty() {
                String::new()
            } else {
                format!("{prefix}{l}")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn defines(program: &str, function_name: &str) -> bool {
    program.lines().any(|l| {
        let t = l.trim_start();
        let t = t.strip_prefix("async ").unwrap_or(t);
        t.strip_prefix("def ")
            .and_then(|r| r.trim_start().strip_prefix(function_name))
            .is_some_and(|r| r.trim_start().starts_with('('))
    })
}

/// Source text to splice in place of the original definition. A program
/// that is only a body gets the task's signature and docstring prepended.
fn splice_text(task: &CodingTask, program: &str, base_indent: &str) -> String {
    let full = if defines(program, &task.function_name) {
        dedent(program)
    } else {
        format!(
            "{}\n{}",
            dedent(&task.signature_and_doc).trim_end(),
            indent(&dedent(program), "    ")
        )
    };
    indent(&full, base_indent) + "\n"
}

fn patched_source(task: &CodingTask, original: &str, program: &str) -> Result<String> {
    let site = &task.completion_site;
    let lines: Vec<&str> = original.split_inclusive('\n').collect();
    if site.end_line > lines.len() {
        return Err(Error::InvalidSpec(format!(
            "task {}: completion site ends at line {} but {} has {} lines",
            task.task_id,
            site.end_line,
            site.file.display(),
            lines.len()
        )));
    }
    let def_line = lines[site.start_line - 1];
    let base_indent = &def_line[..def_line.len() - def_line.trim_start().len()];
    let mut out = String::with_capacity(original.len() + program.len());
    out.extend(lines[..site.start_line - 1].iter().copied());
    out.push_str(&splice_text(task, program, base_indent));
    out.extend(lines[site.end_line..].iter().copied());
    Ok(out)
}

fn fill_command(template: &str, task: &CodingTask, repo: &Path) -> String {
    crate::agents::render(
        template,
        &[
            ("interpreter", task.interpreter_hint.as_str()),
            ("repo", &repo.to_string_lossy()),
            ("file", &task.completion_site.file.to_string_lossy()),
        ],
    )
}

fn check_command(task: &CodingTask) -> Option<String> {
    if let Some(c) = &task.check_command {
        return Some(c.clone());
    }
    let interp = Path::new(&task.interpreter_hint)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    interp
        .starts_with("python")
        .then(|| PYTHON_COMPILE_CHECK.to_string())
}

const CRASH_SIGNALS: [i32; 5] = [
    libc::SIGILL,
    libc::SIGABRT,
    libc::SIGBUS,
    libc::SIGFPE,
    libc::SIGSEGV,
];

enum RunStatus {
    Exited(i32),
    Signaled(i32),
    TimedOut,
}

fn run_shell(command: &str, repo: &Path, timeout: Duration) -> Result<(RunStatus, String)> {
    let mut out = tempfile::tempfile().map_err(|e| Error::io("creating capture file", e))?;
    let err = out
        .try_clone()
        .map_err(|e| Error::io("creating capture file", e))?;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(repo)
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .stdin(Stdio::null())
        .stdout(
            err.try_clone()
                .map_err(|e| Error::io("creating capture file", e))?,
        )
        .stderr(err)
        .process_group(0)
        .spawn()
        .map_err(|e| Error::EnvMissing(format!("cannot spawn sh: {e}")))?;
    let pgid = child.id() as libc::pid_t;
    let status = match child
        .wait_timeout(timeout)
        .map_err(|e| Error::io("waiting for test process", e))?
    {
        Some(status) => {
            // Reap anything the command left running in its group.
            unsafe { libc::killpg(pgid, libc::SIGKILL) };
            match (status.code(), status.signal()) {
                // `sh` reports a child killed by a signal as 128 + signal.
                (Some(code), _) if CRASH_SIGNALS.contains(&(code - 128)) => {
                    RunStatus::Signaled(code - 128)
                }
                (Some(code), _) => RunStatus::Exited(code),
                (None, Some(sig)) => RunStatus::Signaled(sig),
                (None, None) => RunStatus::Signaled(0),
            }
        }
        None => {
            unsafe { libc::killpg(pgid, libc::SIGKILL) };
            let _ = child.wait();
            RunStatus::TimedOut
        }
    };
    let mut captured = String::new();
    use std::io::Seek;
    let _ = out.seek(std::io::SeekFrom::Start(0));
    let _ = out.read_to_string(&mut captured);
    Ok((status, tail(&captured, 2000)))
}

fn tail(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut start = s.len() - max;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    s[start..].to_string()
}

/// Writes `program` into the task's completion site, runs the check and test
/// commands, and restores the repository.
pub fn run_unit_tests(task: &CodingTask, program: &str, timeout: Duration) -> Result<TestOutcome> {
    if program.trim().is_empty() {
        return Ok(TestOutcome::empty_program());
    }
    let repo = task.repo_root.canonicalize().map_err(|e| {
        Error::EnvMissing(format!(
            "task {}: repository {} not available: {e}",
            task.task_id,
            task.repo_root.display()
        ))
    })?;
    let file = repo.join(&task.completion_site.file);
    let lock = repo_lock(&repo);
    let _held = lock.lock().unwrap_or_else(|e| e.into_inner());

    let original = fs::read(&file).map_err(|e| {
        Error::EnvMissing(format!(
            "task {}: cannot read {}: {e}",
            task.task_id,
            file.display()
        ))
    })?;
    let patched = patched_source(task, &String::from_utf8_lossy(&original), program)?;
    let guard = RepoGuard {
        root: repo.clone(),
        file: file.clone(),
        original,
        before: tree_entries(&repo),
    };
    {
        let mut f =
            File::create(&file).map_err(|e| Error::io(format!("writing {}", file.display()), e))?;
        std::io::Write::write_all(&mut f, patched.as_bytes())
            .map_err(|e| Error::io(format!("writing {}", file.display()), e))?;
    }

    let outcome = (|| {
        if let Some(check) = check_command(task) {
            let (status, detail) = run_shell(&fill_command(&check, task, &repo), &repo, timeout)?;
            match status {
                RunStatus::Exited(0) => {}
                RunStatus::Exited(127) => {
                    return Err(Error::EnvMissing(format!(
                        "check command not runnable: {detail}"
                    )))
                }
                RunStatus::TimedOut => return Ok(TestOutcome::new(TestCause::Timeout, detail)),
                _ => return Ok(TestOutcome::new(TestCause::Crash, detail)),
            }
        }
        let (status, detail) = run_shell(
            &fill_command(&task.test_command, task, &repo),
            &repo,
            timeout,
        )?;
        Ok(match status {
            RunStatus::Exited(0) => TestOutcome::new(TestCause::Passed, detail),
            RunStatus::Exited(127) => {
                return Err(Error::EnvMissing(format!(
                    "test command not runnable: {detail}"
                )))
            }
            RunStatus::Exited(_) => TestOutcome::new(TestCause::TestFailure, detail),
            RunStatus::Signaled(sig) => TestOutcome::new(
                TestCause::Crash,
                format!("killed by signal {sig}\n{detail}"),
            ),
            RunStatus::TimedOut => TestOutcome::new(TestCause::Timeout, detail),
        })
    })();
    drop(guard);
    if let Ok(o) = &outcome {
        debug!(task = %task.task_id, cause = ?o.cause, "unit tests finished");
    }
    outcome
}

/// Memoizes test outcomes per (task, program text).
#[derive(Debug, Default)]
pub struct TestCache {
    entries: Mutex<HashMap<(String, [u8; 32]), TestOutcome>>,
}

impl TestCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn run(&self, task: &CodingTask, program: &str, timeout: Duration) -> Result<TestOutcome> {
        let key = (
            task.task_id.clone(),
            Sha256::digest(program.as_bytes()).into(),
        );
        if let Some(hit) = self
            .entries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(&key)
        {
            return Ok(hit.clone());
        }
        let outcome = run_unit_tests(task, program, timeout)?;
        self.entries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, outcome.clone());
        Ok(outcome)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CompletionSite;

    fn task(start: usize, end: usize) -> CodingTask {
        CodingTask {
            task_id: "t".into(),
            function_name: "area".into(),
            signature_and_doc: "def area(self, w, h):\n    \"\"\"Area of a rectangle.\"\"\"".into(),
            repo_root: PathBuf::from("."),
            test_command: "true".into(),
            interpreter_hint: "python3".into(),
            completion_site: CompletionSite {
                file: "m.py".into(),
                start_line: start,
                end_line: end,
            },
            check_command: None,
            reference_solution: None,
        }
    }

    #[test]
    fn splices_full_definition_at_method_indent() {
        let src = "class A:\n    def area(self, w, h):\n        pass\n\n    def other(self):\n        return 0\n";
        let out = patched_source(
            &task(2, 3),
            src,
            "def area(self, w, h):\n    return w * h\n",
        )
        .unwrap();
        assert_eq!(
            out,
            "class A:\n    def area(self, w, h):\n        return w * h\n\n    def other(self):\n        return 0\n"
        );
    }

    #[test]
    fn body_only_program_gets_signature() {
        let src = "def area(self, w, h):\n    pass\n";
        let out = patched_source(&task(1, 2), src, "return w * h").unwrap();
        assert_eq!(
            out,
            "def area(self, w, h):\n    \"\"\"Area of a rectangle.\"\"\"\n    return w * h\n"
        );
    }

    #[test]
    fn site_past_end_is_invalid() {
        assert!(patched_source(&task(1, 9), "x = 1\n", "pass").is_err());
    }

    #[test]
    fn tail_respects_char_boundaries() {
        assert_eq!(tail("héllo", 4), "llo");
        assert_eq!(tail("abc", 10), "abc");
    }
}

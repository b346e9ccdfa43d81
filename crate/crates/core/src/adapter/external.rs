//! Adapter for real projects driven by shell commands from a `key=value`
//! config file. Every compile or test run happens in a scratch copy of the
//! project, so concurrent runs never share a directory.
//!
//! ```text
//! compile_cmd = python3 -m py_compile shapes.py
//! test_cmd = python3 -m unittest discover -s tests -t . -v
//! workdir = .
//! timeout_s = 60
//! result_regex = (?m)^(?P<name>test\w*) \(.*\) \.\.\. (?P<status>ok|FAIL|ERROR)
//! failing_test_group = name
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use regex::Regex;
use tracing::debug;
use wait_timeout::ChildExt;
use walkdir::WalkDir;

use super::*;
use crate::injector::text_rules::TextCatalog;
use crate::model::LineSpan;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    pub compile_cmd: Option<String>,
    pub test_cmd: String,
    /// Directory the commands run in, relative to the project root.
    pub workdir: PathBuf,
    pub timeout: Duration,
    /// Matched against test output; each match is one test result.
    pub result_regex: Option<Regex>,
    /// Capture group holding the test name.
    pub failing_test_group: String,
    /// Matched against compiler output; groups `file`, `line`, `message`,
    /// and optionally `code`.
    pub diagnostic_regex: Option<Regex>,
    pub source_ext: Vec<String>,
    pub test_dir: String,
    /// Constructor call pattern: group 1 is the type, group 2 the arguments.
    pub constructor_regex: Regex,
    pub null_literal: String,
    pub language: String,
}

impl ExternalConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, AdapterError> {
        let err = |message: String| AdapterError::Config {
            path: path.to_path_buf(),
            message,
        };
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected key = value", n + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let regex = |key: &str| -> Result<Option<Regex>, AdapterError> {
            kv.get(key)
                .map(|r| Regex::new(r).map_err(|e| err(format!("{key}: {e}"))))
                .transpose()
        };
        let timeout = match kv.get("timeout_s") {
            Some(s) => Duration::from_secs_f64(
                s.parse::<f64>()
                    .ok()
                    .filter(|t| *t > 0.0)
                    .ok_or_else(|| err(format!("timeout_s: not a positive number: {s}")))?,
            ),
            None => DEFAULT_TIMEOUT,
        };
        let failing_test_group = kv.get("failing_test_group").cloned().unwrap_or_else(|| "name".into());
        let result_regex = regex("result_regex")?;
        if let Some(r) = &result_regex {
            if !r.capture_names().flatten().any(|n| n == failing_test_group) {
                return Err(err(format!("result_regex has no group named `{failing_test_group}`")));
            }
        }
        Ok(ExternalConfig {
            compile_cmd: kv.get("compile_cmd").cloned(),
            test_cmd: kv.get("test_cmd").cloned().ok_or_else(|| err("missing test_cmd".into()))?,
            workdir: PathBuf::from(kv.get("workdir").map_or(".", String::as_str)),
            timeout,
            result_regex,
            failing_test_group,
            diagnostic_regex: regex("diagnostic_regex")?,
            source_ext: kv
                .get("source_ext")
                .map_or(".py", String::as_str)
                .split(',')
                .map(|s| s.trim().to_string())
                .collect(),
            test_dir: kv.get("test_dir").cloned().unwrap_or_else(|| "tests".into()),
            constructor_regex: regex("constructor_regex")?
                .unwrap_or_else(|| Regex::new(r"\b([A-Z]\w*)\(([^()]*)\)").expect("default regex")),
            null_literal: kv.get("null_literal").cloned().unwrap_or_else(|| "null".into()),
            language: kv.get("language").cloned().unwrap_or_else(|| "unknown".into()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, AdapterError> {
        let text = fs::read_to_string(path).map_err(|e| AdapterError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }
}

#[derive(Debug)]
pub struct ExternalAdapter {
    config: ExternalConfig,
    project_root: PathBuf,
}

/// Result of one shell command.
#[derive(Debug)]
struct Run {
    status: Option<i32>,
    timed_out: bool,
    output: String,
}

fn read_all(mut r: impl Read + Send + 'static) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        buf
    })
}

fn run_shell(cmd: &str, dir: &Path, timeout: Duration) -> Result<Run, AdapterError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()?;
    let out = read_all(child.stdout.take().expect("piped stdout"));
    let err = read_all(child.stderr.take().expect("piped stderr"));
    let (status, timed_out) = match child.wait_timeout(timeout)? {
        Some(s) => (s.code(), false),
        None => {
            // Kill the whole group so grandchildren do not keep the pipes open.
            unsafe {
                libc::kill(-(child.id() as i32), libc::SIGKILL);
            }
            let _ = child.wait();
            (None, true)
        }
    };
    let mut output = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
    output.push_str(&String::from_utf8_lossy(&err.join().unwrap_or_default()));
    if status == Some(127) {
        return Err(AdapterError::CommandNotFound(cmd.to_string()));
    }
    Ok(Run {
        status,
        timed_out,
        output,
    })
}

fn status_of(word: &str, message: String) -> TestStatus {
    match word.to_ascii_lowercase().as_str() {
        "ok" | "pass" | "passed" | "success" => TestStatus::Pass,
        "timeout" | "timed out" => TestStatus::Timeout,
        "error" | "exception" | "crash" => TestStatus::Fail {
            kind: FailureKind::Exception,
            message,
        },
        _ => TestStatus::Fail {
            kind: FailureKind::Assertion,
            message,
        },
    }
}

const OUTPUT_LIMIT: usize = 4000;

fn clip(s: &str) -> String {
    let s = s.trim();
    if s.len() <= OUTPUT_LIMIT {
        return s.to_string();
    }
    let mut end = OUTPUT_LIMIT;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    s[..end].to_string()
}

impl ExternalAdapter {
    pub fn new(config: ExternalConfig, project_root: impl Into<PathBuf>) -> Self {
        ExternalAdapter {
            config,
            project_root: project_root.into(),
        }
    }

    pub fn config(&self) -> &ExternalConfig {
        &self.config
    }

    fn is_source(&self, path: &str) -> bool {
        self.config.source_ext.iter().any(|e| path.ends_with(e.as_str()))
    }

    fn is_test(&self, path: &str) -> bool {
        path.starts_with(&format!("{}/", self.config.test_dir))
    }

    /// Copies the project into a fresh directory and overlays `tree`.
    fn scratch(&self, tree: &SourceTree) -> Result<tempfile::TempDir, AdapterError> {
        if !self.project_root.is_dir() {
            return Err(AdapterError::WorkdirMissing(self.project_root.clone()));
        }
        let dir = tempfile::tempdir()?;
        for entry in WalkDir::new(&self.project_root)
            .into_iter()
            .filter_entry(|e| e.file_name() != ".git")
        {
            let entry = entry.map_err(|e| AdapterError::Failure(e.to_string()))?;
            let rel = entry.path().strip_prefix(&self.project_root).expect("walk stays under root");
            let dest = dir.path().join(rel);
            if entry.file_type().is_dir() {
                fs::create_dir_all(&dest)?;
            } else if entry.file_type().is_file() {
                let rel_str = rel.to_string_lossy();
                if !self.is_source(&rel_str) || tree.get(&rel_str).is_some() {
                    fs::copy(entry.path(), &dest)?;
                }
            }
        }
        tree.write_to(dir.path())?;
        Ok(dir)
    }

    fn workdir(&self, scratch: &Path) -> Result<PathBuf, AdapterError> {
        let wd = scratch.join(&self.config.workdir);
        if wd.is_dir() {
            Ok(wd)
        } else {
            Err(AdapterError::WorkdirMissing(self.project_root.join(&self.config.workdir)))
        }
    }

    fn parse_results(&self, run: &Run) -> TestRunOutcome {
        let mut results = BTreeMap::new();
        if run.timed_out {
            results.insert("suite".to_string(), TestStatus::Timeout);
            return TestRunOutcome { results };
        }
        if let Some(re) = &self.config.result_regex {
            let has_status = re.capture_names().flatten().any(|n| n == "status");
            for caps in re.captures_iter(&run.output) {
                let Some(name) = caps.name(&self.config.failing_test_group) else {
                    continue;
                };
                let word = caps.name("status").map_or("fail", |m| m.as_str());
                let message = caps
                    .name("message")
                    .map_or_else(|| word.to_string(), |m| m.as_str().trim().to_string());
                let status = if has_status {
                    status_of(word, message)
                } else {
                    status_of("fail", message)
                };
                results.insert(name.as_str().to_string(), status);
            }
        }
        let exit_ok = run.status == Some(0);
        let any_failed = results.values().any(|s| !s.is_pass());
        if results.is_empty() || (!exit_ok && !any_failed) {
            let status = if exit_ok {
                TestStatus::Pass
            } else {
                TestStatus::Fail {
                    kind: FailureKind::Assertion,
                    message: format!("test command exited with {}", run.status.unwrap_or(-1)),
                }
            };
            results.insert("suite".to_string(), status);
        }
        TestRunOutcome { results }
    }
}

impl TargetAdapter for ExternalAdapter {
    fn name(&self) -> &str {
        "external"
    }

    fn language(&self) -> &str {
        &self.config.language
    }

    fn load(&self, root: &Path) -> Result<SourceTree, AdapterError> {
        if !root.is_dir() {
            return Err(AdapterError::WorkdirMissing(root.to_path_buf()));
        }
        Ok(SourceTree::read_dir(root, |p| self.is_source(p))?)
    }

    /// Every non-blank line of a non-test source file is one statement.
    fn statements(&self, tree: &SourceTree) -> Result<Vec<Statement>, AdapterError> {
        let mut out = Vec::new();
        for (path, text) in tree.files() {
            if !self.is_source(path) || self.is_test(path) {
                continue;
            }
            let mut offset = 0;
            for (n, line) in text.split_inclusive('\n').enumerate() {
                let body = line.trim_end_matches(['\n', '\r']);
                let content = body.trim_start();
                if !content.trim().is_empty() {
                    let indent = &body[..body.len() - content.len()];
                    let start = offset + indent.len();
                    let content = content.trim_end();
                    let line_no = n as u32 + 1;
                    out.push(Statement {
                        id: StatementId {
                            file: path.clone(),
                            path: format!("line/{line_no}"),
                        },
                        kind: if content.contains('(') {
                            StatementKind::Call
                        } else {
                            StatementKind::Assignment
                        },
                        span: CodeLocation {
                            file_path: path.clone(),
                            before_span: Some(LineSpan::new(line_no, line_no)),
                            after_span: None,
                        },
                        bytes: start..start + content.len(),
                        indent: indent.to_string(),
                    });
                }
                offset += line.len();
            }
        }
        Ok(out)
    }

    fn catalog<'a>(&'a self, tree: &'a SourceTree) -> Result<Box<dyn RuleCatalog + 'a>, AdapterError> {
        Ok(Box::new(TextCatalog::new(
            tree,
            self.config.constructor_regex.clone(),
            self.config.null_literal.clone(),
        )))
    }

    fn compile(&self, tree: &SourceTree) -> Result<CompileOutcome, AdapterError> {
        let Some(cmd) = &self.config.compile_cmd else {
            return Ok(CompileOutcome::success());
        };
        let dir = self.scratch(tree)?;
        let run = run_shell(cmd, &self.workdir(dir.path())?, self.config.timeout)?;
        debug!(status = ?run.status, "compile command finished");
        if run.status == Some(0) {
            return Ok(CompileOutcome::success());
        }
        let mut diagnostics = Vec::new();
        if let Some(re) = &self.config.diagnostic_regex {
            for caps in re.captures_iter(&run.output) {
                diagnostics.push(CompileDiagnostic {
                    code: caps.name("code").map_or("compile error", |m| m.as_str()).to_string(),
                    message: caps.name("message").map_or("", |m| m.as_str()).trim().to_string(),
                    file: caps.name("file").map(|m| m.as_str().to_string()),
                    line: caps.name("line").and_then(|m| m.as_str().parse().ok()),
                });
            }
        }
        if diagnostics.is_empty() {
            diagnostics.push(CompileDiagnostic {
                code: if run.timed_out { "compile timeout" } else { "compile error" }.to_string(),
                message: clip(&run.output),
                file: None,
                line: None,
            });
        }
        Ok(CompileOutcome { ok: false, diagnostics })
    }

    fn run_tests(&self, tree: &SourceTree, timeout: Option<Duration>) -> Result<TestRunOutcome, AdapterError> {
        let dir = self.scratch(tree)?;
        let run = run_shell(
            &self.config.test_cmd,
            &self.workdir(dir.path())?,
            timeout.unwrap_or(self.config.timeout),
        )?;
        Ok(self.parse_results(&run))
    }

    fn install_test(&self, tree: &mut SourceTree, name: &str, payload: &[u8]) -> Result<Vec<String>, AdapterError> {
        let ext = self.config.source_ext.first().map_or("", String::as_str);
        let file = name.replace(|c: char| !c.is_ascii_alphanumeric(), "_");
        let src = std::str::from_utf8(payload)
            .map_err(|_| AdapterError::Failure(format!("test payload {name} is not UTF-8")))?;
        tree.insert(format!("{}/test_{file}{ext}", self.config.test_dir), src);
        Ok(vec!["suite".to_string()])
    }
}

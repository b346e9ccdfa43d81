//! The contract between the injector and a codebase it can mutate: parse,
//! enumerate statements, rewrite, compile and test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::injector::RuleId;
use crate::model::{CodeLocation, FailureKind};
use crate::tree::SourceTree;

pub mod external;
pub mod minilang;

pub use external::{ExternalAdapter, ExternalConfig};
pub use minilang::MiniLangAdapter;

/// Stable statement identity: file plus a block path such as `main/3/then/0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StatementId {
    pub file: String,
    pub path: String,
}

impl fmt::Display for StatementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.file, self.path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatementKind {
    Declaration,
    Assignment,
    Call,
    If,
    While,
    Return,
    Block,
}

impl StatementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StatementKind::Declaration => "declaration",
            StatementKind::Assignment => "assignment",
            StatementKind::Call => "call",
            StatementKind::If => "if",
            StatementKind::While => "while",
            StatementKind::Return => "return",
            StatementKind::Block => "block",
        }
    }

    pub fn is_construct(self) -> bool {
        matches!(self, StatementKind::If | StatementKind::While | StatementKind::Block)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub id: StatementId,
    pub kind: StatementKind,
    /// Before-side location only.
    pub span: CodeLocation,
    /// Byte range of the statement in its file.
    pub bytes: Range<usize>,
    /// Leading whitespace of the statement's first line.
    pub indent: String,
}

impl Statement {
    pub fn first_line(&self) -> u32 {
        self.span.before_span.map_or(0, |s| s.start)
    }

    pub fn last_line(&self) -> u32 {
        self.span.before_span.map_or(0, |s| s.end)
    }

    pub fn text<'a>(&self, tree: &'a SourceTree) -> &'a str {
        tree.get(&self.id.file).map_or("", |t| &t[self.bytes.clone()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Replacement {
    /// New source text. Lines after the first are relative to the
    /// statement's own indentation.
    Source(String),
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    pub target: StatementId,
    pub replacement: Replacement,
}

/// One mutant: a description plus the edits that produce it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewrite {
    pub description: String,
    pub edits: Vec<Edit>,
}

/// Per-snapshot rewrite catalog. `rewrites` is empty when the rule does not
/// apply to the statement.
pub trait RuleCatalog: Send + Sync {
    fn rewrites(&self, stmt: &Statement, rule: RuleId) -> Vec<Rewrite>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileDiagnostic {
    pub code: String,
    pub message: String,
    pub file: Option<String>,
    pub line: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileOutcome {
    pub ok: bool,
    pub diagnostics: Vec<CompileDiagnostic>,
}

impl CompileOutcome {
    pub fn success() -> Self {
        CompileOutcome {
            ok: true,
            diagnostics: Vec::new(),
        }
    }

    /// First error by (file, line); unlocated diagnostics sort last.
    pub fn first_error(&self) -> Option<&CompileDiagnostic> {
        self.diagnostics.iter().min_by(|a, b| {
            let key = |d: &CompileDiagnostic| (d.file.is_none(), d.file.clone(), d.line.unwrap_or(u32::MAX));
            key(a).cmp(&key(b))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TestStatus {
    Pass,
    Fail { kind: FailureKind, message: String },
    Timeout,
}

impl TestStatus {
    pub fn is_pass(&self) -> bool {
        matches!(self, TestStatus::Pass)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TestRunOutcome {
    pub results: BTreeMap<String, TestStatus>,
}

impl TestRunOutcome {
    pub fn all_pass(&self) -> bool {
        self.results.values().all(TestStatus::is_pass)
    }

    /// Names of non-passing tests, sorted.
    pub fn failing(&self) -> Vec<String> {
        self.results
            .iter()
            .filter(|(_, s)| !s.is_pass())
            .map(|(n, _)| n.clone())
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("{file}:{line}:{col}: {message}")]
    Parse {
        file: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("conflicting edits on {0}")]
    ConflictingEdits(StatementId),
    #[error("no statement {0}")]
    UnknownStatement(StatementId),
    #[error("adapter config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("working directory {0} is missing")]
    WorkdirMissing(PathBuf),
    #[error("command not found: {0}")]
    CommandNotFound(String),
    #[error("{0}")]
    Failure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait TargetAdapter: Send + Sync {
    fn name(&self) -> &str;

    /// Language tag recorded on emitted records.
    fn language(&self) -> &str;

    fn load(&self, root: &Path) -> Result<SourceTree, AdapterError>;

    /// Mutable statements in file order, then source order; nested
    /// statements follow their parent.
    fn statements(&self, tree: &SourceTree) -> Result<Vec<Statement>, AdapterError>;

    fn catalog<'a>(&'a self, tree: &'a SourceTree) -> Result<Box<dyn RuleCatalog + 'a>, AdapterError>;

    fn render(&self, tree: &SourceTree, edits: &[Edit]) -> Result<SourceTree, AdapterError> {
        render_edits(tree, &self.statements(tree)?, edits)
    }

    fn compile(&self, tree: &SourceTree) -> Result<CompileOutcome, AdapterError>;

    /// Runs the whole suite. `timeout` overrides the adapter's default.
    fn run_tests(&self, tree: &SourceTree, timeout: Option<Duration>) -> Result<TestRunOutcome, AdapterError>;

    /// Adds an externally supplied test to the tree and returns the names
    /// under which its tests will be reported.
    fn install_test(&self, tree: &mut SourceTree, name: &str, payload: &[u8]) -> Result<Vec<String>, AdapterError>;
}

/// Prefixes every line after the first with `indent`.
pub fn indent_continuation(text: &str, indent: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i > 0 && line != "\n" {
            out.push_str(indent);
        }
        out.push_str(line);
    }
    out
}

/// Inverse of [`indent_continuation`]: strips `indent` from every line
/// after the first that starts with it.
pub fn dedent_continuation(text: &str, indent: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if i > 0 {
            out.push_str(line.strip_prefix(indent).unwrap_or(line));
        } else {
            out.push_str(line);
        }
    }
    out
}

/// Byte range removed by deleting `stmt`: whole lines when the statement
/// is alone on them, else just its bytes.
fn delete_range(text: &str, stmt: &Statement) -> Range<usize> {
    let line_start = text[..stmt.bytes.start].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[stmt.bytes.end..]
        .find('\n')
        .map_or(text.len(), |i| stmt.bytes.end + i + 1);
    let before_blank = text[line_start..stmt.bytes.start].trim().is_empty();
    let after_blank = text[stmt.bytes.end..line_end].trim().is_empty();
    if before_blank && after_blank {
        line_start..line_end
    } else {
        stmt.bytes.clone()
    }
}

/// Applies edits by splicing text into statement byte ranges. Bytes outside
/// edited statements are preserved exactly.
pub fn render_edits(tree: &SourceTree, statements: &[Statement], edits: &[Edit]) -> Result<SourceTree, AdapterError> {
    let index: BTreeMap<&StatementId, &Statement> = statements.iter().map(|s| (&s.id, s)).collect();
    type Splice<'a> = (Range<usize>, String, &'a StatementId);
    let mut by_file: BTreeMap<&str, Vec<Splice>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for e in edits {
        let stmt = index
            .get(&e.target)
            .ok_or_else(|| AdapterError::UnknownStatement(e.target.clone()))?;
        if !seen.insert(&e.target) {
            return Err(AdapterError::ConflictingEdits(e.target.clone()));
        }
        let text = tree
            .get(&stmt.id.file)
            .ok_or_else(|| AdapterError::UnknownStatement(e.target.clone()))?;
        let (range, new) = match &e.replacement {
            Replacement::Source(s) => (stmt.bytes.clone(), indent_continuation(s, &stmt.indent)),
            Replacement::Delete => (delete_range(text, stmt), String::new()),
        };
        by_file.entry(&stmt.id.file).or_default().push((range, new, &e.target));
    }
    let mut out = tree.clone();
    for (file, mut splices) in by_file {
        splices.sort_by_key(|(r, _, _)| (r.start, r.end));
        for w in splices.windows(2) {
            if w[0].0.end > w[1].0.start {
                return Err(AdapterError::ConflictingEdits(w[1].2.clone()));
            }
        }
        let mut text = tree.get(file).unwrap_or_default().to_string();
        for (range, new, _) in splices.into_iter().rev() {
            text.replace_range(range, &new);
        }
        out.insert(file, text);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LineSpan;

    fn stmt(path: &str, text: &str, needle: &str, indent: &str) -> Statement {
        let start = text.find(needle).unwrap();
        let line = text[..start].matches('\n').count() as u32 + 1;
        let end_line = line + needle.matches('\n').count() as u32;
        Statement {
            id: StatementId {
                file: "f.ml".into(),
                path: path.into(),
            },
            kind: StatementKind::Assignment,
            span: CodeLocation {
                file_path: "f.ml".into(),
                before_span: Some(LineSpan::new(line, end_line)),
                after_span: None,
            },
            bytes: start..start + needle.len(),
            indent: indent.into(),
        }
    }

    const SRC: &str = "void f() {\n    a = 1;\n    b = 2; // keep\n}\n";

    fn setup() -> (SourceTree, Vec<Statement>) {
        let mut t = SourceTree::new();
        t.insert("f.ml", SRC);
        let s = vec![stmt("f/0", SRC, "a = 1;", "    "), stmt("f/1", SRC, "b = 2;", "    ")];
        (t, s)
    }

    fn edit(path: &str, r: Replacement) -> Edit {
        Edit {
            target: StatementId {
                file: "f.ml".into(),
                path: path.into(),
            },
            replacement: r,
        }
    }

    #[test]
    fn no_edits_is_identity() {
        let (t, s) = setup();
        assert_eq!(render_edits(&t, &s, &[]).unwrap(), t);
    }

    #[test]
    fn replacement_reindents() {
        let (t, s) = setup();
        let out = render_edits(&t, &s, &[edit("f/0", Replacement::Source("if (x) {\n    a = 1;\n}".into()))]).unwrap();
        assert_eq!(
            out.get("f.ml").unwrap(),
            "void f() {\n    if (x) {\n        a = 1;\n    }\n    b = 2; // keep\n}\n"
        );
    }

    #[test]
    fn delete_whole_line_or_bytes() {
        let (t, s) = setup();
        let out = render_edits(&t, &s, &[edit("f/0", Replacement::Delete)]).unwrap();
        assert_eq!(out.get("f.ml").unwrap(), "void f() {\n    b = 2; // keep\n}\n");
        let out = render_edits(&t, &s, &[edit("f/1", Replacement::Delete)]).unwrap();
        assert_eq!(out.get("f.ml").unwrap(), "void f() {\n    a = 1;\n     // keep\n}\n");
    }

    #[test]
    fn two_edits_on_one_statement_conflict() {
        let (t, s) = setup();
        let err = render_edits(
            &t,
            &s,
            &[edit("f/0", Replacement::Delete), edit("f/0", Replacement::Source("c = 3;".into()))],
        )
        .unwrap_err();
        assert!(matches!(err, AdapterError::ConflictingEdits(_)));
    }

    #[test]
    fn swap_two_statements() {
        let (t, s) = setup();
        let out = render_edits(
            &t,
            &s,
            &[
                edit("f/0", Replacement::Source("b = 2;".into())),
                edit("f/1", Replacement::Source("a = 1;".into())),
            ],
        )
        .unwrap();
        assert_eq!(out.get("f.ml").unwrap(), "void f() {\n    b = 2;\n    a = 1; // keep\n}\n");
    }

    #[test]
    fn dedent_inverts_indent() {
        let rel = "if (x) {\n    y = 1;\n}";
        assert_eq!(dedent_continuation(&indent_continuation(rel, "  "), "  "), rel);
    }
}

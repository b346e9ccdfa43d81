//! In-process adapter for MiniLang projects: `.ml` sources, with tests under
//! `tests/`. Test files are compiled and run but never mutated.

use std::path::Path;
use std::time::Duration;

use ::minilang::ast::{Block, Stmt, StmtKind, Type};
use ::minilang::{DiagCode, Program, SourceFile, TestResult};

use super::*;
use crate::injector::minilang_rules::MiniLangCatalog;
use crate::model::LineSpan;

pub const DEFAULT_TEST_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone)]
pub struct MiniLangAdapter {
    test_timeout: Duration,
}

impl Default for MiniLangAdapter {
    fn default() -> Self {
        MiniLangAdapter {
            test_timeout: DEFAULT_TEST_TIMEOUT,
        }
    }
}

pub fn is_source(path: &str) -> bool {
    path.ends_with(".ml")
}

pub fn is_test_file(path: &str) -> bool {
    path.starts_with("tests/")
}

/// A statement together with the syntax context rules need.
#[derive(Debug, Clone)]
pub(crate) struct Walked {
    pub stmt: Statement,
    pub ast: Stmt,
    pub fn_ret: Type,
    /// Ids of the statements in the same block, in order.
    pub siblings: Vec<StatementId>,
    pub index_in_block: usize,
    /// Variables in scope just before the statement, innermost last.
    pub visible: Vec<(String, Type)>,
}

fn kind_of(s: &Stmt) -> StatementKind {
    match s.kind {
        StmtKind::Decl { .. } => StatementKind::Declaration,
        StmtKind::Assign { .. } => StatementKind::Assignment,
        StmtKind::Call(_) => StatementKind::Call,
        StmtKind::If { .. } => StatementKind::If,
        StmtKind::While { .. } => StatementKind::While,
        StmtKind::Return(_) => StatementKind::Return,
        StmtKind::Block(_) => StatementKind::Block,
    }
}

fn line_indent(src: &str, at: usize) -> String {
    let start = src[..at].rfind('\n').map_or(0, |i| i + 1);
    src[start..]
        .chars()
        .take_while(|c| *c == ' ' || *c == '\t')
        .collect()
}

fn block_labels(s: &Stmt) -> Vec<&'static str> {
    match &s.kind {
        StmtKind::If { else_block, .. } => {
            if else_block.is_some() {
                vec!["then", "else"]
            } else {
                vec!["then"]
            }
        }
        StmtKind::While { .. } => vec!["body"],
        StmtKind::Block(_) => vec!["block"],
        _ => Vec::new(),
    }
}

struct Walker<'a> {
    path: &'a str,
    src: &'a str,
    out: Vec<Walked>,
}

impl Walker<'_> {
    fn block(
        &mut self,
        b: &Block,
        prefix: &str,
        fn_ret: Type,
        scope: &mut Vec<(String, Type)>,
    ) {
        let ids: Vec<StatementId> = (0..b.stmts.len())
            .map(|i| StatementId {
                file: self.path.to_string(),
                path: format!("{prefix}/{i}"),
            })
            .collect();
        let depth = scope.len();
        for (i, s) in b.stmts.iter().enumerate() {
            let id = ids[i].clone();
            self.out.push(Walked {
                stmt: Statement {
                    id: id.clone(),
                    kind: kind_of(s),
                    span: CodeLocation {
                        file_path: self.path.to_string(),
                        before_span: Some(LineSpan::new(s.span.line, s.span.end_line)),
                        after_span: None,
                    },
                    bytes: s.span.start..s.span.end,
                    indent: line_indent(self.src, s.span.start),
                },
                ast: s.clone(),
                fn_ret,
                siblings: ids.clone(),
                index_in_block: i,
                visible: scope.clone(),
            });
            for (blk, label) in s.blocks().into_iter().zip(block_labels(s)) {
                self.block(blk, &format!("{}/{label}", id.path), fn_ret, scope);
            }
            if let StmtKind::Decl { ty, name, .. } = &s.kind {
                scope.push((name.clone(), *ty));
            }
        }
        scope.truncate(depth);
    }
}

pub(crate) fn walk_file(path: &str, src: &str, file: &SourceFile) -> Vec<Walked> {
    let mut w = Walker {
        path,
        src,
        out: Vec::new(),
    };
    for f in &file.functions {
        let mut scope: Vec<(String, Type)> = f.params.iter().map(|p| (p.name.clone(), p.ty)).collect();
        w.block(&f.body, &f.name, f.ret, &mut scope);
    }
    w.out
}

fn parse_err(file: &str, e: ::minilang::ParseError) -> AdapterError {
    AdapterError::Parse {
        file: file.to_string(),
        line: e.line,
        col: e.col,
        message: e.message,
    }
}

/// Statements and syntax context for every mutable file.
pub(crate) fn walk_tree(tree: &SourceTree) -> Result<Vec<Walked>, AdapterError> {
    let mut out = Vec::new();
    for (path, src) in tree.files() {
        if !is_source(path) || is_test_file(path) {
            continue;
        }
        let file = ::minilang::parse_file(path, src).map_err(|e| parse_err(path, e))?;
        out.extend(walk_file(path, src, &file));
    }
    Ok(out)
}

pub(crate) fn program(tree: &SourceTree) -> Result<Program, (String, ::minilang::ParseError)> {
    Program::parse(
        tree.files()
            .iter()
            .filter(|(p, _)| is_source(p))
            .map(|(p, s)| (p.clone(), s.clone()))
            .collect(),
    )
}

fn test_status(r: TestResult) -> TestStatus {
    match r {
        TestResult::Pass => TestStatus::Pass,
        TestResult::AssertionFailed(message) => TestStatus::Fail {
            kind: FailureKind::Assertion,
            message,
        },
        TestResult::Fault(message) => TestStatus::Fail {
            kind: FailureKind::Exception,
            message,
        },
        TestResult::Timeout => TestStatus::Timeout,
    }
}

impl MiniLangAdapter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Per-test wall-clock limit used when `run_tests` gets no override.
    pub fn with_test_timeout(mut self, t: Duration) -> Self {
        self.test_timeout = t;
        self
    }
}

impl TargetAdapter for MiniLangAdapter {
    fn name(&self) -> &str {
        "minilang"
    }

    fn language(&self) -> &str {
        "MiniLang"
    }

    fn load(&self, root: &Path) -> Result<SourceTree, AdapterError> {
        if !root.is_dir() {
            return Err(AdapterError::WorkdirMissing(root.to_path_buf()));
        }
        Ok(SourceTree::read_dir(root, is_source)?)
    }

    fn statements(&self, tree: &SourceTree) -> Result<Vec<Statement>, AdapterError> {
        Ok(walk_tree(tree)?.into_iter().map(|w| w.stmt).collect())
    }

    fn catalog<'a>(&'a self, tree: &'a SourceTree) -> Result<Box<dyn RuleCatalog + 'a>, AdapterError> {
        Ok(Box::new(MiniLangCatalog::new(tree)?))
    }

    fn compile(&self, tree: &SourceTree) -> Result<CompileOutcome, AdapterError> {
        let program = match program(tree) {
            Ok(p) => p,
            Err((file, e)) => {
                return Ok(CompileOutcome {
                    ok: false,
                    diagnostics: vec![CompileDiagnostic {
                        code: DiagCode::SyntaxError.as_str().to_string(),
                        message: e.message,
                        file: Some(file),
                        line: Some(e.line),
                    }],
                })
            }
        };
        let diagnostics: Vec<CompileDiagnostic> = ::minilang::check(&program)
            .into_iter()
            .map(|d| CompileDiagnostic {
                code: d.code.as_str().to_string(),
                message: d.message,
                file: Some(d.file),
                line: Some(d.line),
            })
            .collect();
        Ok(CompileOutcome {
            ok: diagnostics.is_empty(),
            diagnostics,
        })
    }

    fn run_tests(&self, tree: &SourceTree, timeout: Option<Duration>) -> Result<TestRunOutcome, AdapterError> {
        let program = program(tree).map_err(|(f, e)| parse_err(&f, e))?;
        let limit = timeout.unwrap_or(self.test_timeout);
        let results = program
            .test_names()
            .into_iter()
            .map(|name| {
                let r = ::minilang::run_test(&program, &name, limit);
                (name, test_status(r))
            })
            .collect();
        Ok(TestRunOutcome { results })
    }

    fn install_test(&self, tree: &mut SourceTree, name: &str, payload: &[u8]) -> Result<Vec<String>, AdapterError> {
        let path = format!("tests/{name}.ml");
        let src = std::str::from_utf8(payload)
            .map_err(|_| AdapterError::Failure(format!("test payload {name} is not UTF-8")))?;
        let file = ::minilang::parse_file(&path, src).map_err(|e| parse_err(&path, e))?;
        let mut names: Vec<String> = file
            .functions
            .iter()
            .filter(|f| f.is_test())
            .map(|f| f.name.clone())
            .collect();
        names.sort();
        tree.insert(path, src);
        Ok(names)
    }
}

//! MiniLang: a small statically typed language with `int`, `bool` and `str`
//! values, C-style statements and `test_*` functions.
//!
//! It exists to give mutation campaigns a target whose compiler and test
//! runner are in-process and deterministic.
//!
//! ```text
//! int clamp(int v, int hi) {
//!     if (v > hi) {
//!         return hi;
//!     }
//!     return v;
//! }
//!
//! void test_clamp() {
//!     assert(clamp(5, 3) == 3, "clamped");
//! }
//! ```

pub mod ast;
pub mod builtins;
pub mod check;
pub mod interp;
pub mod lexer;
pub mod parser;
pub mod printer;

use std::fmt;

pub use ast::{SourceFile, Span, Stmt, StmtKind, Type};
pub use check::check;
pub use interp::{run_test, TestResult};
pub use parser::{parse_file, parse_stmt};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

/// Diagnostic categories reported by [`check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiagCode {
    SyntaxError,
    CannotFindSymbol,
    TypeMismatch,
    DuplicateDeclaration,
    WrongArgumentCount,
    MissingReturn,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::SyntaxError => "syntax error",
            DiagCode::CannotFindSymbol => "cannot find symbol",
            DiagCode::TypeMismatch => "type mismatch",
            DiagCode::DuplicateDeclaration => "duplicate declaration",
            DiagCode::WrongArgumentCount => "wrong number of arguments",
            DiagCode::MissingReturn => "missing return statement",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub message: String,
    pub file: String,
    pub line: u32,
    pub col: u32,
}

impl Diagnostic {
    pub fn new(code: DiagCode, message: String, file: &str, span: Span) -> Self {
        Diagnostic {
            code,
            message,
            file: file.to_string(),
            line: span.line,
            col: span.col,
        }
    }
}

/// A parsed multi-file program. Functions share one global namespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub files: Vec<SourceFile>,
}

impl Program {
    /// Parses `(path, source)` pairs. Fails on the first syntax error,
    /// reporting the offending path alongside the error.
    pub fn parse(sources: Vec<(String, String)>) -> Result<Self, (String, ParseError)> {
        let mut files = Vec::with_capacity(sources.len());
        for (path, src) in sources {
            match parse_file(&path, &src) {
                Ok(f) => files.push(f),
                Err(e) => return Err((path, e)),
            }
        }
        Ok(Program { files })
    }

    /// Names of all test functions, sorted.
    pub fn test_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .files
            .iter()
            .flat_map(|f| f.functions.iter())
            .filter(|f| f.is_test())
            .map(|f| f.name.clone())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

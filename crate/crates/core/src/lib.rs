//! Collection of precise bug-fix records from three sources: NVD
//! vulnerability entries, OSS-Fuzz issues, and test-validated bug injection.
//!
//! Every source produces [`model::BugRecord`] values that share one JSONL wire
//! format, handled by [`store`].

pub mod adapter;
pub mod git;
pub mod http;
pub mod injector;
pub mod model;
pub mod nvd;
pub mod ossfuzz;
pub mod patch;
pub mod repos;
pub mod store;
pub mod tree;
pub mod udiff;

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use model::{BugRecord, BugType, CodeLocation, DiffHunk, LineSpan, ProjectRef, Source, TestSpec};
pub use tree::SourceTree;

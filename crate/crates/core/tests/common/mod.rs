#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use pbc_core::model::meta;
use pbc_core::{BugRecord, BugType, CodeLocation, DiffHunk, LineSpan, ProjectRef, Source};

pub fn hunk(file: &str, line: u32, before: &str, after: &str) -> DiffHunk {
    DiffHunk {
        location: CodeLocation {
            file_path: file.into(),
            before_span: Some(LineSpan::new(line, line)),
            after_span: Some(LineSpan::new(line, line)),
        },
        before_text: format!("{before}\n"),
        after_text: format!("{after}\n"),
    }
}

pub fn project(name: &str, language: &str) -> ProjectRef {
    ProjectRef::new("github.com", "acme", name, language)
}

/// NVD record `n` of project `name`, fixed on `date` (`YYYY-MM-DD`) if given.
pub fn nvd(n: usize, cwe: &str, name: &str, language: &str, date: Option<&str>) -> BugRecord {
    let mut m = BTreeMap::new();
    m.insert(meta::CVE_ID.into(), format!("CVE-2020-{n:05}"));
    m.insert(meta::CWE_ID.into(), cwe.into());
    if let Some(d) = date {
        m.insert(meta::FIX_DATE.into(), d.into());
    }
    BugRecord::new(
        Source::Nvd,
        project(name, language),
        format!("{n:040x}"),
        format!("{:040x}", n + 1),
        vec![hunk("src/a.c", 10, &format!("old {n}"), &format!("new {n}"))],
        BugType::CweId(cwe.into()),
        None,
        m,
        DateTime::<Utc>::UNIX_EPOCH,
    )
}

pub fn ossfuzz(n: usize, crash: &str, name: &str, date: Option<&str>) -> BugRecord {
    let mut m = BTreeMap::new();
    m.insert(meta::OSSFUZZ_ISSUE_ID.into(), n.to_string());
    if let Some(d) = date {
        m.insert(meta::FIX_DATE.into(), d.into());
    }
    BugRecord::new(
        Source::OssFuzz,
        project(name, "C"),
        format!("{n:040x}"),
        format!("{:040x}", n + 1),
        vec![hunk("src/b.c", 20, &format!("old {n}"), &format!("new {n}"))],
        BugType::CrashType(crash.into()),
        None,
        m,
        DateTime::<Utc>::UNIX_EPOCH,
    )
}

pub fn injection(n: usize, created_at: DateTime<Utc>) -> BugRecord {
    let mut m = BTreeMap::new();
    m.insert(meta::RULE_ID.into(), (n % 16 + 1).to_string());
    BugRecord::new(
        Source::Injection,
        project("demo", "MiniLang"),
        format!("{n:064x}"),
        format!("{:064x}", n + 1),
        vec![hunk("main.ml", 3, &format!("int x = {n};"), "int x = 0;")],
        BugType::CompileDiagnostic {
            code: "type mismatch".into(),
            message: "expected int".into(),
        },
        None,
        m,
        created_at,
    )
}

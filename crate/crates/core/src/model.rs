//! Shared record schema for every bug source.
//!
//! A [`BugRecord`] is one `<buggy, fix, loc, type, (tests)>` entry. The
//! `before` side of every hunk is the buggy code and the `after` side is the
//! fix, whatever the source.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Metadata keys with a fixed meaning across the pipeline.
pub mod meta {
    pub const CVE_ID: &str = "cve_id";
    pub const CWE_ID: &str = "cwe_id";
    pub const CWE_IDS: &str = "cwe_ids";
    pub const SEVERITY: &str = "severity";
    pub const OSSFUZZ_ISSUE_ID: &str = "ossfuzz_issue_id";
    pub const RULE_ID: &str = "rule_id";
    pub const DISCOVERY_DATE: &str = "discovery_date";
    pub const FIX_DATE: &str = "fix_date";
    pub const REPRODUCIBLE: &str = "reproducible";
}

/// Placeholder CWE used when NVD lists no usable weakness id.
pub const CWE_UNKNOWN: &str = "CWE-unknown";

static CWE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CWE-[0-9]+$").unwrap());
static HOST_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[A-Za-z0-9]([A-Za-z0-9-]{0,61}[A-Za-z0-9])?(\.[A-Za-z0-9]([A-Za-z0-9-]{0,61}[A-Za-z0-9])?)*$")
        .unwrap()
});

pub fn is_cwe_id(s: &str) -> bool {
    CWE_RE.is_match(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "NVD")]
    Nvd,
    #[serde(rename = "OSSFuzz")]
    OssFuzz,
    #[serde(rename = "Injection")]
    Injection,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Nvd, Source::OssFuzz, Source::Injection];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Nvd => "NVD",
            Source::OssFuzz => "OSSFuzz",
            Source::Injection => "Injection",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProjectRef {
    pub host: String,
    pub owner: String,
    pub name: String,
    pub language: String,
}

impl ProjectRef {
    pub fn new(host: &str, owner: &str, name: &str, language: &str) -> Self {
        ProjectRef {
            host: host.to_string(),
            owner: owner.to_string(),
            name: name.to_string(),
            language: language.to_string(),
        }
    }

    /// `host/owner/name`, ignoring the language tag.
    pub fn slug(&self) -> String {
        format!("{}/{}/{}", self.host, self.owner, self.name)
    }
}

/// 1-based inclusive line range. Serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(u32, u32)", into = "(u32, u32)")]
pub struct LineSpan {
    pub start: u32,
    pub end: u32,
}

impl LineSpan {
    pub fn new(start: u32, end: u32) -> Self {
        LineSpan { start, end }
    }

    pub fn len(&self) -> u32 {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl From<(u32, u32)> for LineSpan {
    fn from((start, end): (u32, u32)) -> Self {
        LineSpan { start, end }
    }
}

impl From<LineSpan> for (u32, u32) {
    fn from(s: LineSpan) -> Self {
        (s.start, s.end)
    }
}

pub fn span_len(span: Option<LineSpan>) -> u32 {
    span.map_or(0, |s| s.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeLocation {
    #[serde(rename = "file")]
    pub file_path: String,
    pub before_span: Option<LineSpan>,
    pub after_span: Option<LineSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiffHunk {
    #[serde(flatten)]
    pub location: CodeLocation,
    pub before_text: String,
    pub after_text: String,
}

/// Number of lines in hunk text; a trailing fragment without `\n` counts.
pub fn line_count(text: &str) -> u32 {
    text.split_inclusive('\n').count() as u32
}

impl DiffHunk {
    pub fn file(&self) -> &str {
        &self.location.file_path
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Assertion,
    Exception,
    Timeout,
    Crash,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::Assertion => "assertion",
            FailureKind::Exception => "exception",
            FailureKind::Timeout => "timeout",
            FailureKind::Crash => "crash",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "assertion" => FailureKind::Assertion,
            "exception" => FailureKind::Exception,
            "timeout" => FailureKind::Timeout,
            "crash" => FailureKind::Crash,
            _ => return None,
        })
    }
}

/// What kind of bug a record describes. Serialized as `{kind, value, message?}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "WireBugType", into = "WireBugType")]
pub enum BugType {
    CweId(String),
    CrashType(String),
    CompileDiagnostic { code: String, message: String },
    TestFailure { kind: FailureKind, message: String },
}

impl BugType {
    /// Short key used for type histograms.
    pub fn display_key(&self) -> String {
        match self {
            BugType::CweId(id) => id.clone(),
            BugType::CrashType(name) => name.clone(),
            BugType::CompileDiagnostic { code, .. } => code.clone(),
            BugType::TestFailure { kind, message } => match kind {
                FailureKind::Assertion => "assertion failure".to_string(),
                FailureKind::Timeout => "timeout".to_string(),
                FailureKind::Exception | FailureKind::Crash => message.clone(),
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WireBugType {
    kind: String,
    value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

impl From<BugType> for WireBugType {
    fn from(t: BugType) -> Self {
        let (kind, value, message) = match t {
            BugType::CweId(id) => ("cwe", id, None),
            BugType::CrashType(name) => ("crash_type", name, None),
            BugType::CompileDiagnostic { code, message } => ("compile_diagnostic", code, Some(message)),
            BugType::TestFailure { kind, message } => {
                ("test_failure", kind.as_str().to_string(), Some(message))
            }
        };
        WireBugType {
            kind: kind.to_string(),
            value,
            message,
        }
    }
}

impl TryFrom<WireBugType> for BugType {
    type Error = String;

    fn try_from(w: WireBugType) -> Result<Self, String> {
        Ok(match w.kind.as_str() {
            "cwe" => BugType::CweId(w.value),
            "crash_type" => BugType::CrashType(w.value),
            "compile_diagnostic" => BugType::CompileDiagnostic {
                code: w.value,
                message: w.message.unwrap_or_default(),
            },
            "test_failure" => BugType::TestFailure {
                kind: FailureKind::parse(&w.value)
                    .ok_or_else(|| format!("unknown test failure kind `{}`", w.value))?,
                message: w.message.unwrap_or_default(),
            },
            other => return Err(format!("unknown bug type kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    /// A failing test supplied by the bug repository (OSS-Fuzz testcases).
    New,
    /// A test from the project's own suite (injection).
    Existing,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestSpec {
    pub name: String,
    pub kind: TestKind,
    /// Relative path of an input blob stored beside the dataset, or a command
    /// descriptor. Absent when the test is identified by name in the suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugRecord {
    pub id: String,
    pub source: Source,
    pub project: ProjectRef,
    pub fix_commit: String,
    pub parent_commit: String,
    pub hunks: Vec<DiffHunk>,
    pub bug_type: BugType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<Vec<TestSpec>>,
    pub metadata: BTreeMap<String, String>,
    pub created_at: DateTime<Utc>,
}

impl BugRecord {
    /// Builds a record and fills in its content id.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        source: Source,
        project: ProjectRef,
        fix_commit: String,
        parent_commit: String,
        hunks: Vec<DiffHunk>,
        bug_type: BugType,
        tests: Option<Vec<TestSpec>>,
        metadata: BTreeMap<String, String>,
        created_at: DateTime<Utc>,
    ) -> Self {
        let mut r = BugRecord {
            id: String::new(),
            source,
            project,
            fix_commit,
            parent_commit,
            hunks,
            bug_type,
            tests,
            metadata,
            created_at,
        };
        r.id = record_id(&r);
        r
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Year the fix landed, from `metadata.fix_date` (`YYYY-...`).
    pub fn fix_year(&self) -> Option<i32> {
        let date = self.meta(meta::FIX_DATE)?;
        date.get(..4)?.parse().ok()
    }
}

fn normalize_newlines(s: &str) -> String {
    s.replace("\r\n", "\n").replace('\r', "\n")
}

/// Metadata key that distinguishes two records sharing one fix commit.
fn identity_key(source: Source) -> &'static str {
    match source {
        Source::Nvd => meta::CVE_ID,
        Source::OssFuzz => meta::OSSFUZZ_ISSUE_ID,
        Source::Injection => meta::RULE_ID,
    }
}

#[derive(Serialize)]
struct CanonicalHunk<'a> {
    file: &'a str,
    before_span: Option<LineSpan>,
    after_span: Option<LineSpan>,
    before_text: String,
    after_text: String,
}

#[derive(Serialize)]
struct Canonical<'a> {
    source: &'static str,
    host: &'a str,
    owner: &'a str,
    name: &'a str,
    language: &'a str,
    fix_commit: &'a str,
    bug_ref: Option<&'a str>,
    hunks: Vec<CanonicalHunk<'a>>,
}

/// Content hash over source, project, fix commit, the source's bug identifier
/// and the hunks. `id` and `created_at` never contribute.
pub fn record_id(r: &BugRecord) -> String {
    let canonical = Canonical {
        source: r.source.as_str(),
        host: &r.project.host,
        owner: &r.project.owner,
        name: &r.project.name,
        language: &r.project.language,
        fix_commit: &r.fix_commit,
        bug_ref: r.meta(identity_key(r.source)),
        hunks: r
            .hunks
            .iter()
            .map(|h| CanonicalHunk {
                file: &h.location.file_path,
                before_span: h.location.before_span,
                after_span: h.location.after_span,
                before_text: normalize_newlines(&h.before_text),
                after_text: normalize_newlines(&h.after_text),
            })
            .collect(),
    };
    // serde_json writes struct fields in declaration order, so this is stable.
    let bytes = serde_json::to_vec(&canonical).expect("canonical form serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// One broken invariant: the field involved and the rule it breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

pub fn validate(r: &BugRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |field: &str, rule: &str| {
        out.push(Violation {
            field: field.to_string(),
            rule: rule.to_string(),
        })
    };

    if r.project.owner.is_empty() {
        bad("project.owner", "must be non-empty");
    }
    if r.project.name.is_empty() {
        bad("project.name", "must be non-empty");
    }
    if !HOST_RE.is_match(&r.project.host) {
        bad("project.host", "must be a valid hostname");
    }
    if r.hunks.is_empty() {
        bad("hunks", "must be non-empty");
    }
    for (i, h) in r.hunks.iter().enumerate() {
        let loc = &h.location;
        if loc.file_path.is_empty() {
            bad(&format!("hunks[{i}].file"), "must be non-empty");
        }
        for (side, span) in [("before_span", loc.before_span), ("after_span", loc.after_span)] {
            if let Some(s) = span {
                if s.start == 0 || s.start > s.end {
                    bad(&format!("hunks[{i}].{side}"), "must satisfy 1 <= start <= end");
                }
            }
        }
        if loc.before_span.is_none() && loc.after_span.is_none() {
            bad(&format!("hunks[{i}]"), "at least one span must be non-empty");
        }
        let valid_span = |s: Option<LineSpan>| s.is_none_or(|s| s.start >= 1 && s.start <= s.end);
        if valid_span(loc.before_span) && line_count(&h.before_text) != span_len(loc.before_span) {
            bad(&format!("hunks[{i}].before_text"), "line count must equal before_span length");
        }
        if valid_span(loc.after_span) && line_count(&h.after_text) != span_len(loc.after_span) {
            bad(&format!("hunks[{i}].after_text"), "line count must equal after_span length");
        }
    }

    match &r.bug_type {
        BugType::CweId(id) if id != CWE_UNKNOWN && !is_cwe_id(id) => {
            bad("bug_type", "CWE id must match CWE-<digits>")
        }
        BugType::CrashType(name) if name.trim().is_empty() => {
            bad("bug_type", "crash type must be non-empty")
        }
        _ => {}
    }

    let has_tests = r.tests.as_ref().is_some_and(|t| !t.is_empty());
    match r.source {
        Source::Nvd => {
            for key in [meta::CVE_ID, meta::CWE_ID] {
                if r.meta(key).is_none() {
                    bad(key, "required for NVD records");
                }
            }
            if !matches!(r.bug_type, BugType::CweId(_)) {
                bad("bug_type", "NVD records carry a CWE id");
            }
            if r.tests.is_some() {
                bad("tests", "must be absent for NVD records");
            }
        }
        Source::OssFuzz => {
            if r.meta(meta::OSSFUZZ_ISSUE_ID).is_none() {
                bad(meta::OSSFUZZ_ISSUE_ID, "required for OSSFuzz records");
            }
            if !matches!(r.bug_type, BugType::CrashType(_)) {
                bad("bug_type", "OSSFuzz records carry a crash type");
            }
            if let Some(tests) = &r.tests {
                if tests.iter().any(|t| t.kind != TestKind::New) {
                    bad("tests", "OSSFuzz tests must have kind=new");
                }
            }
        }
        Source::Injection => {
            let rule_ok = r
                .meta(meta::RULE_ID)
                .and_then(|v| v.parse::<u8>().ok())
                .is_some_and(|n| (1..=16).contains(&n));
            if !rule_ok {
                bad(meta::RULE_ID, "required for Injection records and must be in 1..16");
            }
            match &r.bug_type {
                BugType::TestFailure { .. } => {
                    if !has_tests {
                        bad("tests", "required and non-empty for test-failure bugs");
                    }
                }
                BugType::CompileDiagnostic { .. } => {
                    if has_tests {
                        bad("tests", "must be absent for compilation bugs");
                    }
                }
                _ => bad("bug_type", "Injection records carry a compile diagnostic or test failure"),
            }
            if let Some(tests) = &r.tests {
                if tests.iter().any(|t| t.kind != TestKind::Existing) {
                    bad("tests", "Injection tests must have kind=existing");
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn hunk(file: &str, before: (u32, u32), after: (u32, u32), b: &str, a: &str) -> DiffHunk {
        DiffHunk {
            location: CodeLocation {
                file_path: file.into(),
                before_span: Some(before.into()),
                after_span: Some(after.into()),
            },
            before_text: b.into(),
            after_text: a.into(),
        }
    }

    fn nvd_record() -> BugRecord {
        let mut meta = BTreeMap::new();
        meta.insert(meta::CVE_ID.into(), "CVE-2012-1584".into());
        meta.insert(meta::CWE_ID.into(), "CWE-189".into());
        BugRecord::new(
            Source::Nvd,
            ProjectRef::new("github.com", "taglib", "taglib", "C++"),
            "a".repeat(40),
            "b".repeat(40),
            vec![hunk(
                "taglib/toolkit/tbytevector.cpp",
                (366, 366),
                (366, 366),
                "  if(length<0xffffffff && length+index < size())\n",
                "  if(length < size() - index)\n",
            )],
            BugType::CweId("CWE-189".into()),
            None,
            meta,
            Utc.timestamp_opt(0, 0).unwrap(),
        )
    }

    #[test]
    fn id_ignores_created_at() {
        let a = nvd_record();
        let mut b = a.clone();
        b.created_at = Utc.timestamp_opt(1_700_000_000, 0).unwrap();
        assert_eq!(record_id(&a), record_id(&b));
        assert_eq!(a.id, record_id(&a));
    }

    #[test]
    fn id_changes_with_hunk_text() {
        let a = nvd_record();
        let mut b = a.clone();
        b.hunks[0].after_text = "  if(length <= size() - index)\n".into();
        assert_ne!(record_id(&a), record_id(&b));
    }

    #[test]
    fn id_normalizes_newlines() {
        let a = nvd_record();
        let mut b = a.clone();
        b.hunks[0].after_text = b.hunks[0].after_text.replace('\n', "\r\n");
        assert_eq!(record_id(&a), record_id(&b));
    }

    #[test]
    fn nvd_record_without_cwe_id_names_the_field() {
        let mut r = nvd_record();
        r.metadata.remove(meta::CWE_ID);
        let v = validate(&r);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].field, "cwe_id");
    }

    #[test]
    fn hunk_line_counts_checked() {
        let mut r = nvd_record();
        r.hunks[0].after_text = "a\nb\n".into();
        let v = validate(&r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "hunks[0].after_text");
    }

    #[test]
    fn unknown_cwe_sentinel_is_accepted() {
        let mut r = nvd_record();
        r.bug_type = BugType::CweId(CWE_UNKNOWN.into());
        assert!(validate(&r).is_empty());
        r.bug_type = BugType::CweId("CWE-XSS".into());
        assert_eq!(validate(&r)[0].field, "bug_type");
    }

    #[test]
    fn injection_test_failure_requires_tests() {
        let mut meta = BTreeMap::new();
        meta.insert(meta::RULE_ID.into(), "12".into());
        let r = BugRecord::new(
            Source::Injection,
            ProjectRef::new("local", "demo", "demo", "MiniLang"),
            "f".repeat(40),
            "e".repeat(40),
            vec![hunk("main.ml", (3, 5), (3, 3), "a\nb\nc\n", "b\n")],
            BugType::TestFailure {
                kind: FailureKind::Exception,
                message: "null access".into(),
            },
            Some(Vec::new()),
            meta,
            Utc.timestamp_opt(0, 0).unwrap(),
        );
        let v = validate(&r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "tests");
    }

    #[test]
    fn pure_insertion_has_no_before_span() {
        let mut r = nvd_record();
        r.hunks[0].location.before_span = None;
        r.hunks[0].before_text.clear();
        assert!(validate(&r).is_empty());
        r.hunks[0].location.after_span = None;
        r.hunks[0].after_text.clear();
        assert_eq!(validate(&r)[0].field, "hunks[0]");
    }

    #[test]
    fn wire_format_field_names() {
        let r = nvd_record();
        let line = serde_json::to_string(&r).unwrap();
        let order = [
            "\"id\"",
            "\"source\"",
            "\"project\"",
            "\"fix_commit\"",
            "\"parent_commit\"",
            "\"hunks\"",
            "\"bug_type\"",
            "\"metadata\"",
            "\"created_at\"",
        ];
        let pos: Vec<usize> = order.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{line}");
        assert!(!line.contains("\"tests\""));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["source"], "NVD");
        assert_eq!(v["hunks"][0]["before_span"], serde_json::json!([366, 366]));
        assert_eq!(v["hunks"][0]["file"], "taglib/toolkit/tbytevector.cpp");
        assert_eq!(v["bug_type"], serde_json::json!({"kind": "cwe", "value": "CWE-189"}));
        assert_eq!(v["created_at"], "1970-01-01T00:00:00Z");
        let back: BugRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn null_span_serializes_as_null() {
        let loc = CodeLocation {
            file_path: "x".into(),
            before_span: None,
            after_span: Some(LineSpan::new(2, 3)),
        };
        assert_eq!(
            serde_json::to_string(&loc).unwrap(),
            r#"{"file":"x","before_span":null,"after_span":[2,3]}"#
        );
    }
}

//! OSS-Fuzz collection: issue ids cited in commit messages are resolved to
//! crash types, failing testcases are attached where the tracker allows
//! downloading them, and reproducibility is checked by running each testcase
//! on both sides of the fix.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::time::Duration;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::Deserialize;
use tracing::{info, warn};

use crate::adapter::{AdapterError, TargetAdapter, TestStatus};
use crate::git::{self, GitError, Repo, Side};
use crate::http::{get_with_retry, FetchError, RateLimiter, RetryPolicy, Transport};
use crate::model::{meta, BugRecord, BugType, ProjectRef, Source, TestKind, TestSpec};
use crate::tree::SourceTree;

pub const DEFAULT_ENDPOINT: &str = "https://oss-fuzz.com/api";
/// Directory, relative to the dataset file, holding testcase blobs.
pub const TESTCASE_DIR: &str = "testcases";

static CREDIT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)credit to oss-fuzz").unwrap());
static NUMBER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d+)\b").unwrap());

/// Patterns that find OSS-Fuzz issue ids in commit messages.
#[derive(Debug, Clone)]
pub struct IdPatterns {
    patterns: Vec<Regex>,
}

impl Default for IdPatterns {
    fn default() -> Self {
        IdPatterns {
            patterns: vec![
                Regex::new(r"oss-fuzz/issues/detail\?id=(\d+)").unwrap(),
                Regex::new(r"(?i)OSS-Fuzz[ -]?(?:issue[: ]*)?#?(\d+)").unwrap(),
            ],
        }
    }
}

impl IdPatterns {
    /// Adds patterns whose first capture group is the issue id.
    pub fn with_extra(mut self, extra: &[String]) -> Result<Self, regex::Error> {
        for p in extra {
            let re = Regex::new(p)?;
            if re.captures_len() < 2 {
                return Err(regex::Error::Syntax(format!("pattern `{p}` has no capture group")));
            }
            self.patterns.push(re);
        }
        Ok(self)
    }

    /// Distinct positive issue ids cited in `message`, ascending.
    pub fn scan(&self, message: &str) -> BTreeSet<u64> {
        let mut ids = BTreeSet::new();
        for re in &self.patterns {
            for caps in re.captures_iter(message) {
                ids.extend(caps.get(1).and_then(|m| m.as_str().parse::<u64>().ok()));
            }
        }
        for line in message.lines().filter(|l| CREDIT_RE.is_match(l)) {
            for caps in NUMBER_RE.captures_iter(line) {
                ids.extend(caps[1].parse::<u64>().ok());
            }
        }
        ids.retain(|id| *id > 0);
        ids
    }
}

/// `(revision, issue_id)` for every commit on HEAD citing an issue, newest
/// commit first.
pub fn scan_commit_messages(repo_path: &Path, patterns: &IdPatterns) -> Result<Vec<(String, u64)>, GitError> {
    let repo = Repo::open(repo_path)?;
    Ok(repo
        .log_messages()?
        .into_iter()
        .flat_map(|(sha, msg)| {
            patterns
                .scan(&msg)
                .into_iter()
                .map(move |id| (sha.clone(), id))
                .collect::<Vec<_>>()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestcaseAccess {
    Available,
    Denied,
    None,
}

impl TestcaseAccess {
    pub fn as_str(self) -> &'static str {
        match self {
            TestcaseAccess::Available => "available",
            TestcaseAccess::Denied => "denied",
            TestcaseAccess::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OssFuzzIssue {
    pub issue_id: u64,
    pub crash_type: String,
    pub project: String,
    pub testcase: Option<Vec<u8>>,
    pub access: TestcaseAccess,
}

#[derive(Debug, thiserror::Error)]
pub enum OssFuzzError {
    #[error("OSS-Fuzz issue {0} not found")]
    IssueNotFound(u64),
    #[error("testcase of OSS-Fuzz issue {0} is restricted")]
    AccessDenied(u64),
    #[error("OSS-Fuzz issue {id}: {message}")]
    Parse { id: u64, message: String },
    #[error("commit {0} changes no text files")]
    NoTextHunks(String),
    #[error(transparent)]
    Transport(#[from] FetchError),
    #[error(transparent)]
    Git(#[from] GitError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Issue metadata as served by the tracker and stored in fixtures.
#[derive(Debug, Clone, Deserialize)]
pub struct IssueInfo {
    pub id: u64,
    pub project: String,
    pub crash_type: String,
}

pub trait IssueSource {
    fn issue(&self, id: u64) -> Result<IssueInfo, OssFuzzError>;
    /// `Ok(None)` when the issue has no testcase; `AccessDenied` when it
    /// exists but may not be downloaded.
    fn testcase(&self, id: u64) -> Result<Option<Vec<u8>>, OssFuzzError>;
}

/// Recorded tracker responses: `issues/<id>.json` plus `testcases/<id>`
/// blobs. A `testcases/<id>.denied` marker stands for a restricted testcase.
#[derive(Debug, Clone)]
pub struct FixtureIssues {
    root: PathBuf,
}

impl FixtureIssues {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, OssFuzzError> {
        let root = root.into();
        let issues = root.join("issues");
        if !issues.is_dir() {
            return Err(OssFuzzError::Io {
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing issues/ directory"),
                path: issues,
            });
        }
        Ok(FixtureIssues { root })
    }
}

impl IssueSource for FixtureIssues {
    fn issue(&self, id: u64) -> Result<IssueInfo, OssFuzzError> {
        let path = self.root.join("issues").join(format!("{id}.json"));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(OssFuzzError::IssueNotFound(id)),
            Err(source) => return Err(OssFuzzError::Io { path, source }),
        };
        parse_issue(id, text.as_bytes())
    }

    fn testcase(&self, id: u64) -> Result<Option<Vec<u8>>, OssFuzzError> {
        let dir = self.root.join(TESTCASE_DIR);
        if dir.join(format!("{id}.denied")).exists() {
            return Err(OssFuzzError::AccessDenied(id));
        }
        let path = dir.join(id.to_string());
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(OssFuzzError::Io { path, source }),
        }
    }
}

fn parse_issue(id: u64, body: &[u8]) -> Result<IssueInfo, OssFuzzError> {
    let info: IssueInfo = serde_json::from_slice(body).map_err(|e| OssFuzzError::Parse {
        id,
        message: e.to_string(),
    })?;
    if info.id != id || info.crash_type.trim().is_empty() {
        return Err(OssFuzzError::Parse {
            id,
            message: "id mismatch or empty crash type".into(),
        });
    }
    Ok(info)
}

/// Tracker client: `GET {endpoint}/issues/{id}` returns the issue JSON,
/// `GET {endpoint}/testcases/{id}` the testcase bytes.
pub struct LiveIssues {
    transport: Box<dyn Transport>,
    endpoint: String,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

impl LiveIssues {
    pub fn new(transport: Box<dyn Transport>, endpoint: &str) -> Self {
        LiveIssues {
            transport,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            retry: RetryPolicy::default(),
            limiter: RateLimiter::new(Duration::from_millis(500)),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn get(&self, path: &str) -> Result<Vec<u8>, FetchError> {
        let url = format!("{}/{path}", self.endpoint);
        Ok(get_with_retry(self.transport.as_ref(), &url, &[], self.retry, &self.limiter)?.body)
    }
}

impl IssueSource for LiveIssues {
    fn issue(&self, id: u64) -> Result<IssueInfo, OssFuzzError> {
        match self.get(&format!("issues/{id}")) {
            Ok(body) => parse_issue(id, &body),
            Err(FetchError::Status { status: 404, .. }) => Err(OssFuzzError::IssueNotFound(id)),
            Err(e) => Err(e.into()),
        }
    }

    fn testcase(&self, id: u64) -> Result<Option<Vec<u8>>, OssFuzzError> {
        match self.get(&format!("testcases/{id}")) {
            Ok(body) => Ok(Some(body)),
            Err(FetchError::Status { status: 401 | 403, .. }) => Err(OssFuzzError::AccessDenied(id)),
            Err(FetchError::Status { status: 404, .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// Crash type and testcase of one issue. A restricted testcase leaves the
/// issue usable, just without a test.
pub fn resolve_issue(id: u64, source: &dyn IssueSource) -> Result<OssFuzzIssue, OssFuzzError> {
    let info = source.issue(id)?;
    let (testcase, access) = match source.testcase(id) {
        Ok(Some(b)) => (Some(b), TestcaseAccess::Available),
        Ok(None) => (None, TestcaseAccess::None),
        Err(OssFuzzError::AccessDenied(_)) => {
            info!(issue = id, "testcase download not authorized");
            (None, TestcaseAccess::Denied)
        }
        Err(e) => return Err(e),
    };
    Ok(OssFuzzIssue {
        issue_id: id,
        crash_type: info.crash_type,
        project: info.project,
        testcase,
        access,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Reproducible,
    NotReproducible,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Reproducible => "reproducible",
            Verdict::NotReproducible => "not-reproducible",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// Value stored in `metadata.reproducible`.
    pub fn metadata_value(self) -> &'static str {
        match self {
            Verdict::Reproducible => "true",
            Verdict::NotReproducible => "false",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReproResult {
    pub buggy: BTreeMap<String, TestStatus>,
    pub fixed: BTreeMap<String, TestStatus>,
    pub verdict: Verdict,
    /// Build failure that made the verdict inconclusive.
    pub diagnostic: Option<String>,
}

impl ReproResult {
    fn inconclusive(diagnostic: String) -> Self {
        ReproResult {
            buggy: BTreeMap::new(),
            fixed: BTreeMap::new(),
            verdict: Verdict::Inconclusive,
            diagnostic: Some(diagnostic),
        }
    }
}

/// Loads the bytes behind a `payload_ref`.
pub type PayloadLoader<'a> = &'a dyn Fn(&str) -> std::io::Result<Vec<u8>>;

/// Runs `tests` on both snapshots. Reproducible means every test passes on
/// the fixed side and at least one fails on the buggy side.
pub fn reproduce_trees(
    mut buggy: SourceTree,
    mut fixed: SourceTree,
    tests: &[TestSpec],
    payloads: PayloadLoader<'_>,
    adapter: &dyn TargetAdapter,
    timeout: Option<Duration>,
) -> Result<ReproResult, OssFuzzError> {
    let mut names = BTreeSet::new();
    for t in tests {
        match &t.payload_ref {
            Some(r) => {
                let blob = payloads(r).map_err(|source| OssFuzzError::Io {
                    path: PathBuf::from(r),
                    source,
                })?;
                names.extend(adapter.install_test(&mut buggy, &t.name, &blob)?);
                adapter.install_test(&mut fixed, &t.name, &blob)?;
            }
            None => {
                names.insert(t.name.clone());
            }
        }
    }
    if names.is_empty() {
        return Ok(ReproResult::inconclusive("no tests to run".into()));
    }
    for (side, tree) in [("buggy", &buggy), ("fixed", &fixed)] {
        let c = adapter.compile(tree)?;
        if !c.ok {
            let d = c.first_error().map(|d| format!("{}: {}", d.code, d.message)).unwrap_or_default();
            return Ok(ReproResult::inconclusive(format!("{side} side does not build: {d}")));
        }
    }
    let pick = |tree: &SourceTree| -> Result<BTreeMap<String, TestStatus>, OssFuzzError> {
        let run = adapter.run_tests(tree, timeout)?;
        Ok(names
            .iter()
            .map(|n| {
                let status = run.results.get(n).cloned().unwrap_or(TestStatus::Fail {
                    kind: crate::model::FailureKind::Exception,
                    message: "test not found".into(),
                });
                (n.clone(), status)
            })
            .collect())
    };
    let buggy_res = pick(&buggy)?;
    let fixed_res = pick(&fixed)?;
    let verdict = if fixed_res.values().all(TestStatus::is_pass) && buggy_res.values().any(|s| !s.is_pass()) {
        Verdict::Reproducible
    } else {
        Verdict::NotReproducible
    };
    Ok(ReproResult {
        buggy: buggy_res,
        fixed: fixed_res,
        verdict,
        diagnostic: None,
    })
}

/// Checks out both sides of `record` from `repo_path` and reproduces its tests.
pub fn reproduce(
    record: &BugRecord,
    repo_path: &Path,
    payloads: PayloadLoader<'_>,
    adapter: &dyn TargetAdapter,
    timeout: Option<Duration>,
) -> Result<ReproResult, OssFuzzError> {
    let pair = git::resolve_commit(repo_path, &record.fix_commit)?;
    let buggy = git::snapshot(&pair, Side::Before)?;
    let fixed = git::snapshot(&pair, Side::After)?;
    let tests = record.tests.clone().unwrap_or_default();
    reproduce_trees(buggy, fixed, &tests, payloads, adapter, timeout)
}

/// Project of a checkout from its `origin` remote, when that is a URL of
/// the form `https://host/owner/name` or `git@host:owner/name`.
pub fn project_from_remote(repo_path: &Path, language: &str) -> Option<ProjectRef> {
    static REMOTE_RE: LazyLock<Regex> = LazyLock::new(|| {
        Regex::new(r"^(?:https?://|ssh://git@|git@)([A-Za-z0-9.-]+)[:/]([A-Za-z0-9_.-]+)/([A-Za-z0-9_.-]+?)(?:\.git)?/?$")
            .unwrap()
    });
    let url = Repo::open(repo_path).ok()?.remote_url("origin")?;
    let c = REMOTE_RE.captures(&url)?;
    Some(ProjectRef::new(&c[1], &c[2], &c[3], language))
}

pub struct TrackContext<'a> {
    pub project: ProjectRef,
    /// Directory testcase blobs are written under (`testcases/<id>`).
    pub dataset_dir: &'a Path,
    /// Reproduce each record with an attached testcase.
    pub adapter: Option<&'a dyn TargetAdapter>,
    pub timeout: Option<Duration>,
    pub created_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OssFuzzRunStats {
    pub commits_scanned: usize,
    pub citations: usize,
    pub records: usize,
    pub testcases: usize,
    pub testcases_denied: usize,
    pub reproducible: usize,
    pub not_reproducible: usize,
    pub inconclusive: usize,
    pub skipped: BTreeMap<&'static str, usize>,
}

impl OssFuzzRunStats {
    pub fn report(&self) -> String {
        let mut out = format!(
            "commits_scanned={}\ncitations={}\nrecords={}\ntestcases={}\ntestcases_denied={}\nreproducible={}\nnot_reproducible={}\ninconclusive={}\n",
            self.commits_scanned,
            self.citations,
            self.records,
            self.testcases,
            self.testcases_denied,
            self.reproducible,
            self.not_reproducible,
            self.inconclusive
        );
        for (k, v) in &self.skipped {
            out.push_str(&format!("skipped.{k}={v}\n"));
        }
        out
    }
}

fn skip_cause(e: &OssFuzzError) -> &'static str {
    match e {
        OssFuzzError::IssueNotFound(_) => "issue_not_found",
        OssFuzzError::NoTextHunks(_) => "no_text_hunks",
        OssFuzzError::Git(GitError::RootCommit(_)) => "root_commit",
        OssFuzzError::Git(GitError::MergeCommit(_)) => "merge_commit",
        OssFuzzError::Git(_) => "git_failure",
        OssFuzzError::Transport(_) => "transport",
        OssFuzzError::Parse { .. } => "malformed_issue",
        _ => "other",
    }
}

/// Builds one record per (fix commit, cited issue) in the repository.
/// Records are sorted by issue id, then fix commit.
pub fn track(
    repo_path: &Path,
    patterns: &IdPatterns,
    source: &dyn IssueSource,
    ctx: &TrackContext<'_>,
) -> Result<(Vec<BugRecord>, OssFuzzRunStats), OssFuzzError> {
    let repo = Repo::open(repo_path)?;
    let mut stats = OssFuzzRunStats {
        commits_scanned: repo.log_messages()?.len(),
        ..Default::default()
    };
    let citations = scan_commit_messages(repo_path, patterns)?;
    stats.citations = citations.len();
    let mut records = Vec::new();
    for (rev, id) in citations {
        match build_record(&repo, &rev, id, source, ctx, &mut stats) {
            Ok(r) => records.push(r),
            Err(e) => {
                warn!(issue = id, commit = %rev, error = %e, "skipped");
                *stats.skipped.entry(skip_cause(&e)).or_default() += 1;
            }
        }
    }
    let key = |r: &BugRecord| {
        let id: u64 = r.meta(meta::OSSFUZZ_ISSUE_ID).and_then(|s| s.parse().ok()).unwrap_or(0);
        (id, r.fix_commit.clone())
    };
    records.sort_by_key(key);
    stats.records = records.len();
    info!(records = stats.records, citations = stats.citations, "ossfuzz run finished");
    Ok((records, stats))
}

fn build_record(
    repo: &Repo,
    rev: &str,
    id: u64,
    source: &dyn IssueSource,
    ctx: &TrackContext<'_>,
    stats: &mut OssFuzzRunStats,
) -> Result<BugRecord, OssFuzzError> {
    let issue = resolve_issue(id, source)?;
    let pair = git::resolve_commit(repo.path(), rev)?;
    let hunks = git::diff_hunks(&pair)?;
    if hunks.is_empty() {
        return Err(OssFuzzError::NoTextHunks(pair.fix_revision));
    }
    let info = repo.commit_info(&pair.fix_revision)?;
    let mut metadata = BTreeMap::new();
    metadata.insert(meta::OSSFUZZ_ISSUE_ID.to_string(), id.to_string());
    metadata.insert(
        meta::FIX_DATE.to_string(),
        info.committed.date_naive().format("%Y-%m-%d").to_string(),
    );
    metadata.insert("ossfuzz_project".to_string(), issue.project.clone());
    metadata.insert("testcase_access".to_string(), issue.access.as_str().to_string());
    if issue.access == TestcaseAccess::Denied {
        stats.testcases_denied += 1;
    }
    let tests = match &issue.testcase {
        Some(blob) => {
            let rel = format!("{TESTCASE_DIR}/{id}");
            let path = ctx.dataset_dir.join(&rel);
            let write = || -> std::io::Result<()> {
                fs::create_dir_all(path.parent().expect("has parent"))?;
                fs::write(&path, blob)
            };
            write().map_err(|source| OssFuzzError::Io {
                path: path.clone(),
                source,
            })?;
            stats.testcases += 1;
            Some(vec![TestSpec {
                name: format!("ossfuzz-{id}"),
                kind: TestKind::New,
                payload_ref: Some(rel),
            }])
        }
        None => None,
    };
    if let (Some(adapter), Some(tests)) = (ctx.adapter, &tests) {
        let load = |r: &str| fs::read(ctx.dataset_dir.join(r));
        let buggy = git::snapshot(&pair, Side::Before)?;
        let fixed = git::snapshot(&pair, Side::After)?;
        let res = reproduce_trees(buggy, fixed, tests, &load, adapter, ctx.timeout)?;
        match res.verdict {
            Verdict::Reproducible => stats.reproducible += 1,
            Verdict::NotReproducible => stats.not_reproducible += 1,
            Verdict::Inconclusive => stats.inconclusive += 1,
        }
        metadata.insert(meta::REPRODUCIBLE.to_string(), res.verdict.metadata_value().to_string());
    }
    Ok(BugRecord::new(
        Source::OssFuzz,
        ctx.project.clone(),
        pair.fix_revision,
        pair.parent_revision,
        hunks,
        BugType::CrashType(issue.crash_type),
        tests,
        metadata,
        ctx.created_at.unwrap_or_else(|| info.committed.with_timezone(&Utc)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::MiniLangAdapter;
    use crate::http::tests::{ok, Scripted};
    use crate::http::HttpResponse;

    #[test]
    fn id_patterns() {
        let p = IdPatterns::default();
        let scan = |m: &str| p.scan(m).into_iter().collect::<Vec<_>>();
        assert_eq!(
            scan("avcodec: fix\n\nFixes: https://bugs.chromium.org/p/oss-fuzz/issues/detail?id=57986\n"),
            [57986]
        );
        assert_eq!(scan("Fixes OSS-Fuzz #60001 and oss-fuzz issue 60002."), [60001, 60002]);
        assert_eq!(scan("OSS-Fuzz: 123 / ossfuzz-7"), Vec::<u64>::new());
        assert_eq!(scan("OSS-Fuzz issue: 42"), [42]);
        assert_eq!(scan("Credit to OSS-Fuzz, testcase 60003\nsee 99"), [60003]);
        assert_eq!(scan("fix typo"), Vec::<u64>::new());
        assert_eq!(scan("OSS-Fuzz 5, OSS-Fuzz 5"), [5]);
        let extra = p.clone().with_extra(&[r"ClusterFuzz testcase (\d+)".into()]).unwrap();
        assert_eq!(extra.scan("ClusterFuzz testcase 77").into_iter().collect::<Vec<_>>(), [77]);
        assert!(p.with_extra(&["no group".into()]).is_err());
    }

    struct Canned {
        testcase: Result<Option<Vec<u8>>, u16>,
    }

    impl IssueSource for Canned {
        fn issue(&self, id: u64) -> Result<IssueInfo, OssFuzzError> {
            if id == 1 {
                Ok(IssueInfo {
                    id,
                    project: "p".into(),
                    crash_type: "Heap-buffer-overflow".into(),
                })
            } else {
                Err(OssFuzzError::IssueNotFound(id))
            }
        }

        fn testcase(&self, id: u64) -> Result<Option<Vec<u8>>, OssFuzzError> {
            self.testcase.clone().map_err(|_| OssFuzzError::AccessDenied(id))
        }
    }

    #[test]
    fn denied_testcase_keeps_issue() {
        let i = resolve_issue(1, &Canned { testcase: Err(403) }).unwrap();
        assert_eq!(i.crash_type, "Heap-buffer-overflow");
        assert_eq!(i.access, TestcaseAccess::Denied);
        assert!(i.testcase.is_none());
        let i = resolve_issue(1, &Canned { testcase: Ok(Some(b"t".to_vec())) }).unwrap();
        assert_eq!(i.access, TestcaseAccess::Available);
        assert!(matches!(
            resolve_issue(2, &Canned { testcase: Ok(None) }),
            Err(OssFuzzError::IssueNotFound(2))
        ));
    }

    #[test]
    fn live_source_maps_statuses() {
        let status = |s: u16| {
            Ok(HttpResponse {
                status: s,
                body: vec![],
            })
        };
        let t = Scripted::new(vec![
            ok(r#"{"id": 9, "project": "x", "crash_type": "Null-dereference"}"#),
            status(403),
            status(404),
        ]);
        let live = LiveIssues::new(Box::new(t), "http://tracker.test/api/");
        let i = resolve_issue(9, &live).unwrap();
        assert_eq!(i.crash_type, "Null-dereference");
        assert_eq!(i.access, TestcaseAccess::Denied);
        assert!(matches!(live.issue(10), Err(OssFuzzError::IssueNotFound(10))));
    }

    fn tree(calc: &str) -> SourceTree {
        let mut t = SourceTree::new();
        t.insert("src/calc.ml", calc);
        t
    }

    const TEST: &str = "void test_guard() {\n    assert(safe_div(7, 0) == 0, \"guarded\");\n}\n";

    fn spec() -> Vec<TestSpec> {
        vec![TestSpec {
            name: "ossfuzz-1".into(),
            kind: TestKind::New,
            payload_ref: Some("testcases/1".into()),
        }]
    }

    #[test]
    fn verdicts() {
        use crate::testkit::{MINICALC_CALC_BUGGY as BUGGY, MINICALC_CALC_FIXED as FIXED};
        let load = |_: &str| Ok(TEST.as_bytes().to_vec());
        let a = MiniLangAdapter::new();
        let r = reproduce_trees(tree(BUGGY), tree(FIXED), &spec(), &load, &a, None).unwrap();
        assert_eq!(r.verdict, Verdict::Reproducible);
        assert!(matches!(r.buggy["test_guard"], TestStatus::Fail { .. }));
        let r = reproduce_trees(tree(FIXED), tree(FIXED), &spec(), &load, &a, None).unwrap();
        assert_eq!(r.verdict, Verdict::NotReproducible);
        let r = reproduce_trees(tree("int safe_div(int a) {\n"), tree(FIXED), &spec(), &load, &a, None).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.diagnostic.unwrap().starts_with("buggy side does not build"));
        let r = reproduce_trees(tree(BUGGY), tree(BUGGY), &spec(), &load, &a, None).unwrap();
        assert_eq!(r.verdict, Verdict::NotReproducible);
    }
}

//! NVD vulnerability collection.
//!
//! Entries come from CVE API 2.0 payloads, either replayed from recorded
//! pages or fetched live. Only references that point at a GitHub commit and
//! carry the `Patch` tag are followed; each one becomes a record whose hunks
//! come from the local checkout of that repository.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use regex::Regex;
use serde::Deserialize;
use tracing::{info, warn};

use crate::git::{self, GitError, Repo};
use crate::http::{get_with_retry, FetchError, RateLimiter, RetryPolicy, Transport};
use crate::model::{is_cwe_id, meta, BugRecord, BugType, ProjectRef, Source, CWE_UNKNOWN};
use crate::repos::{LanguageMap, RepoProvider};

pub const API_KEY_ENV: &str = "PBC_NVD_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://services.nvd.nist.gov/rest/json/cves/2.0";

static CVE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap());
static COMMIT_URL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^https://github\.com/([A-Za-z0-9_.-]+)/([A-Za-z0-9_.-]+)/commit/([0-9a-fA-F]{7,40})/?(?:[?#].*)?$",
    )
    .unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reference {
    pub url: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NvdEntry {
    pub cve_id: String,
    pub description: String,
    pub cwe_ids: Vec<String>,
    pub severity: String,
    pub published_date: NaiveDate,
    pub references: Vec<Reference>,
}

#[derive(Debug, thiserror::Error)]
pub enum NvdError {
    #[error(transparent)]
    Transport(#[from] FetchError),
    #[error("malformed page {page}: {message}")]
    Parse {
        page: String,
        message: String,
        /// Where paging resumes after skipping this page.
        next: Option<usize>,
    },
    #[error("fixture directory {path}: {source}")]
    Fixtures {
        path: PathBuf,
        source: std::io::Error,
    },
}

// Wire shape of the CVE API 2.0 response, reduced to what is used.
#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ApiPage {
    #[serde(default)]
    results_per_page: Option<usize>,
    #[serde(default)]
    start_index: Option<usize>,
    #[serde(default)]
    total_results: Option<usize>,
    vulnerabilities: Vec<ApiVuln>,
}

#[derive(Deserialize)]
struct ApiVuln {
    cve: ApiCve,
}

#[derive(Deserialize)]
struct ApiCve {
    id: String,
    published: String,
    #[serde(default)]
    descriptions: Vec<ApiLangString>,
    #[serde(default)]
    weaknesses: Vec<ApiWeakness>,
    #[serde(default)]
    metrics: BTreeMap<String, Vec<ApiMetric>>,
    #[serde(default)]
    references: Vec<ApiReference>,
}

#[derive(Deserialize)]
struct ApiLangString {
    lang: String,
    value: String,
}

#[derive(Deserialize)]
struct ApiWeakness {
    #[serde(default)]
    description: Vec<ApiLangString>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ApiMetric {
    #[serde(default)]
    base_severity: Option<String>,
    #[serde(default)]
    cvss_data: Option<ApiCvssData>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ApiCvssData {
    #[serde(default)]
    base_severity: Option<String>,
}

#[derive(Deserialize)]
struct ApiReference {
    url: String,
    #[serde(default)]
    tags: Vec<String>,
}

fn parse_published(s: &str) -> Option<NaiveDate> {
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f") {
        return Some(dt.date());
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.date_naive());
    }
    NaiveDate::parse_from_str(s.get(..10)?, "%Y-%m-%d").ok()
}

fn severity(metrics: &BTreeMap<String, Vec<ApiMetric>>) -> String {
    for key in ["cvssMetricV31", "cvssMetricV30", "cvssMetricV2"] {
        for m in metrics.get(key).into_iter().flatten() {
            let sev = m
                .cvss_data
                .as_ref()
                .and_then(|d| d.base_severity.clone())
                .or_else(|| m.base_severity.clone());
            if let Some(s) = sev {
                return s;
            }
        }
    }
    String::new()
}

fn convert(cve: ApiCve) -> Result<NvdEntry, String> {
    if !CVE_RE.is_match(&cve.id) {
        return Err(format!("bad CVE id `{}`", cve.id));
    }
    let published_date = parse_published(&cve.published)
        .ok_or_else(|| format!("{}: bad published date `{}`", cve.id, cve.published))?;
    let description = cve
        .descriptions
        .iter()
        .find(|d| d.lang == "en")
        .or(cve.descriptions.first())
        .map(|d| d.value.clone())
        .unwrap_or_default();
    let mut cwe_ids: Vec<String> = Vec::new();
    for w in &cve.weaknesses {
        for d in &w.description {
            if is_cwe_id(&d.value) && !cwe_ids.contains(&d.value) {
                cwe_ids.push(d.value.clone());
            }
        }
    }
    Ok(NvdEntry {
        severity: severity(&cve.metrics),
        cve_id: cve.id,
        description,
        cwe_ids,
        published_date,
        references: cve
            .references
            .into_iter()
            .map(|r| Reference {
                url: r.url,
                tags: r.tags,
            })
            .collect(),
    })
}

/// `(start_index, results_per_page, total_results)`.
pub type Paging = (usize, usize, usize);

/// Parses one API response body. Returns the entries and the paging triple
/// `(start_index, results_per_page, total_results)` when present.
pub fn parse_page(body: &[u8]) -> Result<(Vec<NvdEntry>, Option<Paging>), String> {
    let page: ApiPage = serde_json::from_slice(body).map_err(|e| e.to_string())?;
    let paging = match (page.start_index, page.results_per_page, page.total_results) {
        (Some(s), Some(r), Some(t)) => Some((s, r, t)),
        _ => None,
    };
    let entries = page
        .vulnerabilities
        .into_iter()
        .map(|v| convert(v.cve))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((entries, paging))
}

/// One page of entries and the cursor of the following page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub entries: Vec<NvdEntry>,
    pub next: Option<usize>,
}

pub trait EntrySource {
    fn fetch_entries(&mut self, cursor: usize) -> Result<Page, NvdError>;
}

/// Recorded response payloads, one `*.json` file per page, read in
/// lexicographic order. The cursor is the page index.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    pages: Vec<PathBuf>,
}

impl FixtureSource {
    pub fn open(dir: &Path) -> Result<Self, NvdError> {
        let err = |source| NvdError::Fixtures {
            path: dir.to_path_buf(),
            source,
        };
        let mut pages = Vec::new();
        for entry in fs::read_dir(dir).map_err(err)? {
            let path = entry.map_err(err)?.path();
            if path.extension().is_some_and(|e| e == "json") && path.is_file() {
                pages.push(path);
            }
        }
        pages.sort();
        Ok(FixtureSource { pages })
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }
}

impl EntrySource for FixtureSource {
    fn fetch_entries(&mut self, cursor: usize) -> Result<Page, NvdError> {
        let Some(path) = self.pages.get(cursor) else {
            return Ok(Page {
                entries: Vec::new(),
                next: None,
            });
        };
        let next = (cursor + 1 < self.pages.len()).then_some(cursor + 1);
        let body = fs::read(path).map_err(|source| NvdError::Fixtures {
            path: path.clone(),
            source,
        })?;
        let (entries, _) = parse_page(&body).map_err(|message| NvdError::Parse {
            page: path.display().to_string(),
            message,
            next,
        })?;
        Ok(Page { entries, next })
    }
}

/// Live CVE API client. The cursor is the API's `startIndex`.
pub struct LiveSource {
    transport: Box<dyn Transport>,
    endpoint: String,
    api_key: Option<String>,
    page_size: usize,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

impl LiveSource {
    /// Public-endpoint etiquette: one request per 1.2 s, or per 0.12 s with
    /// an API key.
    pub fn new(transport: Box<dyn Transport>, endpoint: &str, api_key: Option<String>) -> Self {
        let interval = if api_key.is_some() {
            Duration::from_millis(120)
        } else {
            Duration::from_millis(1200)
        };
        LiveSource {
            transport,
            endpoint: endpoint.to_string(),
            api_key,
            page_size: 2000,
            retry: RetryPolicy::default(),
            limiter: RateLimiter::new(interval),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_page_size(mut self, n: usize) -> Self {
        self.page_size = n.max(1);
        self
    }

    pub fn with_min_interval(mut self, d: Duration) -> Self {
        self.limiter = RateLimiter::new(d);
        self
    }

    pub fn min_interval(&self) -> Duration {
        self.limiter.min_interval()
    }
}

impl EntrySource for LiveSource {
    fn fetch_entries(&mut self, cursor: usize) -> Result<Page, NvdError> {
        let sep = if self.endpoint.contains('?') { '&' } else { '?' };
        let url = format!(
            "{}{sep}startIndex={cursor}&resultsPerPage={}",
            self.endpoint, self.page_size
        );
        let mut headers = Vec::new();
        if let Some(k) = &self.api_key {
            headers.push(("apiKey", k.as_str()));
        }
        let resp = get_with_retry(&*self.transport, &url, &headers, self.retry, &self.limiter)?;
        let guess_next = cursor + self.page_size;
        match parse_page(&resp.body) {
            Ok((entries, paging)) => {
                let next = match paging {
                    Some((start, per_page, total)) => {
                        let n = start + per_page.max(entries.len()).max(1);
                        (n < total).then_some(n)
                    }
                    None => None,
                };
                Ok(Page { entries, next })
            }
            Err(message) => Err(NvdError::Parse {
                page: url,
                message,
                next: Some(guess_next),
            }),
        }
    }
}

/// Reads every page. Malformed pages are skipped and counted.
pub fn fetch_all(source: &mut dyn EntrySource) -> Result<(Vec<NvdEntry>, usize), NvdError> {
    let mut all = Vec::new();
    let mut skipped = 0;
    let mut cursor = Some(0);
    while let Some(c) = cursor {
        match source.fetch_entries(c) {
            Ok(page) => {
                all.extend(page.entries);
                cursor = page.next;
            }
            Err(NvdError::Parse {
                page,
                message,
                next,
            }) => {
                warn!(%page, %message, "skipping malformed page");
                skipped += 1;
                cursor = next;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((all, skipped))
}

/// Owner, repository and revision named by a GitHub commit URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRef {
    pub owner: String,
    pub repo: String,
    pub sha: String,
}

pub fn parse_commit_url(url: &str) -> Option<CommitRef> {
    let c = COMMIT_URL_RE.captures(url)?;
    Some(CommitRef {
        owner: c[1].to_string(),
        repo: c[2].trim_end_matches(".git").to_string(),
        sha: c[3].to_ascii_lowercase(),
    })
}

pub fn is_patch_commit_reference(r: &Reference) -> bool {
    parse_commit_url(&r.url).is_some() && r.tags.iter().any(|t| t == "Patch")
}

/// One `(entry, url)` pair per reference that is a GitHub commit URL tagged
/// exactly `Patch`.
pub fn filter_patch_commits(entries: &[NvdEntry]) -> Vec<(NvdEntry, String)> {
    entries
        .iter()
        .flat_map(|e| {
            e.references
                .iter()
                .filter(|r| is_patch_commit_reference(r))
                .map(move |r| (e.clone(), r.url.clone()))
        })
        .collect()
}

/// Why a qualifying reference produced no record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SkipCause {
    RepoUnavailable,
    RevisionNotFound,
    RootCommit,
    MergeCommit,
    NoTextHunks,
    GitFailure,
}

impl SkipCause {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipCause::RepoUnavailable => "repo_unavailable",
            SkipCause::RevisionNotFound => "revision_not_found",
            SkipCause::RootCommit => "root_commit",
            SkipCause::MergeCommit => "merge_commit",
            SkipCause::NoTextHunks => "no_text_hunks",
            SkipCause::GitFailure => "git_failure",
        }
    }

    pub fn of(e: &GitError) -> Self {
        match e {
            GitError::RepoUnavailable { .. } => SkipCause::RepoUnavailable,
            GitError::RevisionNotFound(_) => SkipCause::RevisionNotFound,
            GitError::RootCommit(_) => SkipCause::RootCommit,
            GitError::MergeCommit(_) => SkipCause::MergeCommit,
            _ => SkipCause::GitFailure,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{cve_id} {url}: {cause:?}: {detail}")]
pub struct Skipped {
    pub cve_id: String,
    pub url: String,
    pub cause: SkipCause,
    pub detail: String,
}

pub struct BuildContext<'a> {
    pub repos: &'a dyn RepoProvider,
    pub languages: &'a LanguageMap,
    /// Fixed creation time; the fix commit's time when absent.
    pub created_at: Option<DateTime<Utc>>,
}

pub fn build_cve_record(
    entry: &NvdEntry,
    commit_url: &str,
    ctx: &BuildContext<'_>,
) -> Result<BugRecord, Skipped> {
    let skip = |cause, detail: String| Skipped {
        cve_id: entry.cve_id.clone(),
        url: commit_url.to_string(),
        cause,
        detail,
    };
    let c = parse_commit_url(commit_url)
        .ok_or_else(|| skip(SkipCause::RevisionNotFound, "not a commit URL".into()))?;
    let project = ProjectRef::new(
        "github.com",
        &c.owner,
        &c.repo,
        ctx.languages.language(&c.owner, &c.repo),
    );
    let git_skip = |e: GitError| skip(SkipCause::of(&e), e.to_string());
    let path = ctx.repos.locate(&project).map_err(git_skip)?;
    let pair = git::resolve_commit(&path, &c.sha).map_err(git_skip)?;
    let hunks = git::diff_hunks(&pair).map_err(git_skip)?;
    if hunks.is_empty() {
        return Err(skip(SkipCause::NoTextHunks, "diff has no text hunks".into()));
    }
    let info = Repo::open(&path)
        .and_then(|r| r.commit_info(&pair.fix_revision))
        .map_err(git_skip)?;

    let cwe = entry
        .cwe_ids
        .first()
        .cloned()
        .unwrap_or_else(|| CWE_UNKNOWN.to_string());
    let mut metadata = BTreeMap::new();
    metadata.insert(meta::CVE_ID.into(), entry.cve_id.clone());
    metadata.insert(meta::CWE_ID.into(), cwe.clone());
    metadata.insert(meta::CWE_IDS.into(), entry.cwe_ids.join(","));
    metadata.insert(meta::SEVERITY.into(), entry.severity.clone());
    metadata.insert(
        meta::DISCOVERY_DATE.into(),
        entry.published_date.format("%Y-%m-%d").to_string(),
    );
    metadata.insert(
        meta::FIX_DATE.into(),
        info.committed.date_naive().format("%Y-%m-%d").to_string(),
    );
    metadata.insert("description".into(), entry.description.clone());
    metadata.insert("commit_url".into(), commit_url.to_string());

    Ok(BugRecord::new(
        Source::Nvd,
        project,
        pair.fix_revision,
        pair.parent_revision,
        hunks,
        BugType::CweId(cwe),
        None,
        metadata,
        ctx.created_at
            .unwrap_or_else(|| info.committed.with_timezone(&Utc)),
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NvdRunStats {
    pub entries: usize,
    pub references: usize,
    pub qualifying: usize,
    pub records: usize,
    pub malformed_pages: usize,
    pub skipped: BTreeMap<&'static str, usize>,
}

impl NvdRunStats {
    pub fn report(&self) -> String {
        let mut out = format!(
            "entries={}\nreferences={}\nqualifying={}\nrecords={}\nmalformed_pages={}\n",
            self.entries, self.references, self.qualifying, self.records, self.malformed_pages
        );
        for (k, v) in &self.skipped {
            out.push_str(&format!("skipped.{k}={v}\n"));
        }
        out
    }
}

/// Full pipeline: fetch, filter, build. Records are sorted by CVE id, then
/// fix commit.
pub fn track(
    source: &mut dyn EntrySource,
    ctx: &BuildContext<'_>,
) -> Result<(Vec<BugRecord>, NvdRunStats), NvdError> {
    let (entries, malformed) = fetch_all(source)?;
    let mut stats = NvdRunStats {
        entries: entries.len(),
        references: entries.iter().map(|e| e.references.len()).sum(),
        malformed_pages: malformed,
        ..Default::default()
    };
    let pairs = filter_patch_commits(&entries);
    stats.qualifying = pairs.len();
    let mut records = Vec::new();
    for (entry, url) in &pairs {
        match build_cve_record(entry, url, ctx) {
            Ok(r) => records.push(r),
            Err(s) => {
                warn!(cve = %s.cve_id, url = %s.url, cause = s.cause.as_str(), detail = %s.detail, "skipped");
                *stats.skipped.entry(s.cause.as_str()).or_default() += 1;
            }
        }
    }
    records.sort_by(|a, b| {
        (a.meta(meta::CVE_ID), &a.fix_commit, &a.id).cmp(&(b.meta(meta::CVE_ID), &b.fix_commit, &b.id))
    });
    stats.records = records.len();
    info!(entries = stats.entries, qualifying = stats.qualifying, records = stats.records, "nvd run finished");
    Ok((records, stats))
}

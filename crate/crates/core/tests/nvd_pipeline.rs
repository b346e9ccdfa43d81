use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use pbc_core::http::{HttpResponse, RetryPolicy, Transport};
use pbc_core::nvd::{self, BuildContext, EntrySource, FixtureSource, LiveSource, NvdError};
use pbc_core::repos::{LanguageMap, MirrorDir};
use pbc_core::store::export_jsonl;
use pbc_core::testkit;
use pbc_core::{BugType, LineSpan, Source};
use regex::Regex;

fn fixture_entries() -> Vec<nvd::NvdEntry> {
    let mut src = FixtureSource::open(&testkit::fixtures_dir().join("nvd/pages")).unwrap();
    let (entries, malformed) = nvd::fetch_all(&mut src).unwrap();
    assert_eq!(malformed, 0);
    entries
}

#[test]
fn filter_keeps_the_hand_counted_references() {
    let entries = fixture_entries();
    assert_eq!(entries.len(), 20);
    let total_refs: usize = entries.iter().map(|e| e.references.len()).sum();

    let t = Instant::now();
    let kept = nvd::filter_patch_commits(&entries);
    assert!(t.elapsed() < Duration::from_secs(1));

    // Counted by reading the pages: see fixtures/nvd/README.md.
    assert_eq!(kept.len(), 7);
    assert!(kept.len() <= total_refs);
    let commit = Regex::new(r"^https://github\.com/[^/]+/[^/]+/commit/[0-9a-fA-F]{7,40}$").unwrap();
    for (entry, url) in &kept {
        assert!(commit.is_match(url), "{url}");
        let r = entry.references.iter().find(|r| &r.url == url).unwrap();
        assert!(r.tags.iter().any(|t| t == "Patch"), "{url}");
    }
    let ids: Vec<&str> = kept.iter().map(|(e, _)| e.cve_id.as_str()).collect();
    assert_eq!(
        ids,
        [
            "CVE-2012-1584",
            "CVE-2021-1001",
            "CVE-2021-1002",
            "CVE-2021-1002",
            "CVE-2022-2001",
            "CVE-2022-2002",
            "CVE-2023-3001"
        ]
    );
}

#[test]
fn end_to_end_over_the_fixture_mirror() {
    let dir = tempfile::tempdir().unwrap();
    testkit::build_nvd_mirror(dir.path());
    let mirror = MirrorDir::new(dir.path());
    let mut languages = LanguageMap::new();
    languages.insert("taglib/taglib", "C++");
    let ctx = BuildContext {
        repos: &mirror,
        languages: &languages,
        created_at: None,
    };
    let run = || {
        let mut src = FixtureSource::open(&testkit::fixtures_dir().join("nvd/pages")).unwrap();
        nvd::track(&mut src, &ctx).unwrap()
    };
    let (records, stats) = run();
    assert_eq!(stats.qualifying, 7);
    assert_eq!(records.len(), 5);
    assert_eq!(stats.skipped.get("repo_unavailable"), Some(&1));
    assert_eq!(stats.skipped.get("revision_not_found"), Some(&1));

    let first = &records[0];
    assert_eq!(first.source, Source::Nvd);
    assert_eq!(first.meta("cve_id"), Some("CVE-2012-1584"));
    assert_eq!(first.project.language, "C++");
    assert_eq!(first.hunks[0].location.before_span, Some(LineSpan::new(366, 366)));
    let unknown = records.iter().find(|r| r.meta("cve_id") == Some("CVE-2022-2001")).unwrap();
    assert_eq!(unknown.bug_type, BugType::CweId("CWE-unknown".into()));
    let webkit = records.iter().find(|r| r.meta("cve_id") == Some("CVE-2021-1001")).unwrap();
    assert_eq!(webkit.project.language, "unknown");

    // Rerunning yields the same ids and bytes.
    let (again, _) = run();
    assert_eq!(export_jsonl(&records).unwrap(), export_jsonl(&again).unwrap());
}

struct Failing(Arc<AtomicUsize>);

impl Transport for Failing {
    fn get(&self, _url: &str, _headers: &[(&str, &str)]) -> Result<HttpResponse, String> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err("connection refused".into())
    }
}

#[test]
fn live_source_gives_up_after_bounded_retries() {
    let calls = Arc::new(AtomicUsize::new(0));
    let mut src = LiveSource::new(Box::new(Failing(calls.clone())), nvd::DEFAULT_ENDPOINT, None)
        .with_retry(RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(1),
        })
        .with_min_interval(Duration::ZERO);
    let err = src.fetch_entries(0).unwrap_err();
    assert!(matches!(err, NvdError::Transport(_)), "{err}");
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

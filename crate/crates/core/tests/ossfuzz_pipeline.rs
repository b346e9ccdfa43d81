use std::fs;

use pbc_core::adapter::MiniLangAdapter;
use pbc_core::model::{meta, TestKind};
use pbc_core::ossfuzz::{self, FixtureIssues, IdPatterns, TrackContext, Verdict};
use pbc_core::testkit;
use pbc_core::{BugType, ProjectRef};

fn issues() -> FixtureIssues {
    FixtureIssues::open(testkit::fixtures_dir().join("ossfuzz")).unwrap()
}

#[test]
fn ffmpeg_commit_links_to_integer_overflow() {
    let mirror = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    let (ffmpeg, _) = testkit::build_ossfuzz_mirror(mirror.path());
    let ctx = TrackContext {
        project: ProjectRef::new("github.com", "FFmpeg", "FFmpeg", "C"),
        dataset_dir: data.path(),
        adapter: None,
        timeout: None,
        created_at: None,
    };
    let (records, stats) = ossfuzz::track(&ffmpeg, &IdPatterns::default(), &issues(), &ctx).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r.meta(meta::OSSFUZZ_ISSUE_ID), Some("57986"));
    assert_eq!(r.bug_type, BugType::CrashType("Integer-overflow".into()));
    assert_eq!(r.meta("testcase_access"), Some("denied"));
    assert_eq!(r.meta(meta::FIX_DATE), Some("2023-04-09"));
    assert_eq!(r.tests, None);
    assert_eq!(stats.testcases_denied, 1);
    assert!(pbc_core::model::validate(r).is_empty());
}

#[test]
fn minicalc_records_and_replay() {
    let mc = testkit::minicalc();
    let data = tempfile::tempdir().unwrap();
    let adapter = MiniLangAdapter::new();
    let ctx = TrackContext {
        project: ProjectRef::new("github.com", "minicalc", "minicalc", "MiniLang"),
        dataset_dir: data.path(),
        adapter: Some(&adapter),
        timeout: None,
        created_at: None,
    };
    let patterns = IdPatterns::default();
    let (records, stats) = ossfuzz::track(mc.repo.path(), &patterns, &issues(), &ctx).unwrap();

    let summary: Vec<(&str, &str, Option<&str>)> = records
        .iter()
        .map(|r| (r.meta(meta::OSSFUZZ_ISSUE_ID).unwrap(), r.fix_commit.as_str(), r.meta(meta::REPRODUCIBLE)))
        .collect();
    assert_eq!(
        summary,
        [
            ("60001", mc.div_fix.as_str(), Some("true")),
            ("60002", mc.div_fix.as_str(), None),
            ("60003", mc.text_fix.as_str(), Some("false")),
        ]
    );
    // One commit citing two issues shares its hunks.
    assert_eq!(records[0].hunks, records[1].hunks);
    assert_ne!(records[0].id, records[1].id);
    assert_eq!(records[1].bug_type, BugType::CrashType("Integer-divide-by-zero".into()));
    assert_eq!((stats.reproducible, stats.not_reproducible, stats.testcases), (1, 1, 2));
    assert!(data.path().join("testcases/60001").is_file());

    for r in &records {
        for t in r.tests.iter().flatten() {
            assert_eq!(t.kind, TestKind::New);
        }
        if r.meta(meta::REPRODUCIBLE) == Some("true") {
            let load = |p: &str| fs::read(data.path().join(p));
            let res = ossfuzz::reproduce(r, mc.repo.path(), &load, &adapter, None).unwrap();
            assert_eq!(res.verdict, Verdict::Reproducible);
        }
    }

    // Scanning is a pure function of the log.
    let a = ossfuzz::scan_commit_messages(mc.repo.path(), &patterns).unwrap();
    let b = ossfuzz::scan_commit_messages(testkit::minicalc().repo.path(), &patterns).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
}

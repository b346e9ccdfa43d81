mod common;

use std::fs;

use chrono::{TimeZone, Utc};
use pbc_core::store::{
    self, export_csv_summary, export_jsonl, percent, read_records, year_report, AppendOutcome,
    DatasetStats, DatasetWriter, StoreError, YearLabel, DEFAULT_YEAR_FLOOR,
};
use pbc_core::{BugType, Source};
use proptest::prelude::*;

/// Independent rendering: quotient and remainder of 1000n/d, bumped when the
/// remainder is at least half of d.
fn oracle_percent(n: u64, d: u64) -> String {
    let q = 1000 * n / d;
    let r = 1000 * n % d;
    let tenths = if 2 * r >= d { q + 1 } else { q };
    format!("{}.{}%", tenths / 10, tenths % 10)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4096, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn percent_matches_half_up_oracle(d in 1u64..=10_000_000, frac in 0.0f64..=1.0) {
        let n = ((d as f64 * frac) as u64).clamp(1, d);
        prop_assert_eq!(percent(n, d), oracle_percent(n, d));
    }
}

#[test]
fn percent_boundaries() {
    // 1/8 = 12.5% exactly; 1/16 = 6.25% rounds up; 1/3 rounds down.
    assert_eq!(percent(1, 16), "6.3%");
    assert_eq!(percent(3, 16), "18.8%");
    assert_eq!(percent(1, 3), "33.3%");
    assert_eq!(percent(10_000_000, 10_000_000), "100.0%");
}

#[test]
fn reported_shares_from_counts() {
    let mut records = Vec::new();
    for i in 0..8487 {
        let cwe = if i < 1455 { "CWE-79" } else { "CWE-787" };
        records.push(common::nvd(i, cwe, &format!("p{}", i % 50), "C", None));
    }
    for i in 0..4115 {
        let crash = if i < 805 { "Integer-overflow" } else { "Heap-buffer-overflow" };
        records.push(common::ossfuzz(i, crash, "ffmpeg", None));
    }
    let stats = DatasetStats::from_records(&records);
    assert_eq!(stats.type_share(Source::Nvd, "CWE-79"), "17.1%");
    assert_eq!(stats.type_share(Source::OssFuzz, "Integer-overflow"), "19.6%");
    assert_eq!(stats.source_total(Source::Nvd), 8487);
    assert_eq!(stats.project_count[&Source::Nvd], 50);
    assert_eq!(stats.project_count_overall, 51);
    assert_eq!(
        stats.top_types(Source::OssFuzz, 1),
        [("Heap-buffer-overflow".to_string(), 3310)]
    );
}

#[test]
fn stats_invariants_and_empty_input() {
    let empty = DatasetStats::from_records(&[]);
    assert_eq!(empty, DatasetStats::default());
    assert_eq!(empty.total(), 0);

    let records = vec![
        common::nvd(1, "CWE-79", "a", "C", Some("2021-03-01")),
        common::nvd(2, "CWE-20", "b", "Java", Some("2022-03-01")),
        common::ossfuzz(3, "Integer-overflow", "a", Some("2023-01-05")),
        common::injection(4, Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()),
    ];
    let s = DatasetStats::from_records(&records);
    for src in Source::ALL {
        let t = s.source_total(src);
        let by_lang: u64 = s.by_language.values().filter_map(|m| m.get(&src)).sum();
        let by_type: u64 = s.by_type.get(&src).map_or(0, |m| m.values().sum());
        let by_year: u64 = s.by_year.values().filter_map(|m| m.get(&src)).sum();
        assert_eq!((by_lang, by_type, by_year), (t, t, t), "{src}");
    }
    assert!(s.project_count_overall <= s.project_count.values().sum());
    assert_eq!(s.project_count_overall, 3);
}

#[test]
fn append_dedup_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out/records.jsonl");
    let a = common::nvd(1, "CWE-79", "a", "C", None);
    assert_eq!(store::append(&a, &path).unwrap(), AppendOutcome::Appended);
    let before = fs::read(&path).unwrap();
    assert_eq!(store::append(&a, &path).unwrap(), AppendOutcome::Duplicate);
    assert_eq!(fs::read(&path).unwrap(), before);

    let mut bad = common::nvd(2, "CWE-79", "a", "C", None);
    bad.bug_type = BugType::CweId("79".into());
    match store::append(&bad, &path) {
        Err(StoreError::InvalidRecord { violations, .. }) => assert_eq!(violations[0].field, "bug_type"),
        other => panic!("{other:?}"),
    }
    assert_eq!(fs::read(&path).unwrap(), before);
    assert_eq!(before.iter().filter(|b| **b == b'\n').count(), 1);
}

#[test]
fn appending_a_file_to_itself_adds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let records: Vec<_> = (0..20).map(|i| common::ossfuzz(i, "Index-out-of-bounds", "x", None)).collect();
    let mut w = DatasetWriter::open(&path).unwrap();
    for r in &records {
        w.append(r).unwrap();
    }
    drop(w);
    let copy = read_records(&path).unwrap();
    let mut w = DatasetWriter::open(&path).unwrap();
    let added = copy
        .iter()
        .filter(|r| w.append(r).unwrap() == AppendOutcome::Appended)
        .count();
    assert_eq!(added, 0);
    assert_eq!(w.len(), 20);
    // Storage and analytics agree.
    assert_eq!(
        DatasetStats::from_records(&read_records(&path).unwrap()),
        DatasetStats::from_records(&records)
    );
}

#[test]
fn year_report_shape() {
    let mut records: Vec<_> = (0..717)
        .map(|i| common::nvd(i, "CWE-79", "a", "C", Some("2023-06-01")))
        .collect();
    let rep = year_report(&records, 2022, DEFAULT_YEAR_FLOOR);
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.count(&YearLabel::Year(2023), Source::Nvd), 717);

    let undated: Vec<_> = (0..5).map(|i| common::ossfuzz(i, "Crash", "b", None)).collect();
    let rep = year_report(&undated, 2022, DEFAULT_YEAR_FLOOR);
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.rows[0].label, YearLabel::Unknown);

    // Mixed fixture, hand count for >= 2022: 717 (2023 NVD) + 2 (2022 OSS-Fuzz)
    // + 1 (2024 injection) = 720.
    records.push(common::ossfuzz(1, "Crash", "b", Some("2022-01-01")));
    records.push(common::ossfuzz(2, "Crash", "b", Some("2022-12-31")));
    records.push(common::ossfuzz(3, "Crash", "b", Some("2021-12-31")));
    records.push(common::nvd(900, "CWE-20", "a", "C", Some("2015-05-05")));
    records.push(common::nvd(901, "CWE-20", "a", "C", Some("2009-05-05")));
    records.push(common::injection(5, Utc.with_ymd_and_hms(2024, 2, 2, 0, 0, 0).unwrap()));
    records.extend(undated);
    let rep = year_report(&records, 2022, DEFAULT_YEAR_FLOOR);
    let labels: Vec<String> = rep.rows.iter().map(|r| r.label.to_string()).collect();
    assert_eq!(labels, ["2024", "2023", "2022", "2021", "<=2015", "unknown"]);
    assert_eq!(rep.count(&YearLabel::AtOrBelow(2015), Source::Nvd), 2);
    assert_eq!(rep.since_cutoff.values().sum::<u64>(), 720);
    assert!(rep.render().ends_with(">=2022\t717\t2\t1\t720\n"));
}

#[test]
fn exports() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![
        common::ossfuzz(2, "Integer-overflow", "b", Some("2023-01-01")),
        common::nvd(1, "CWE-79", "a", "C", Some("2021-01-01")),
    ];
    let a = export_jsonl(&records).unwrap();
    let b = export_jsonl(&[records[1].clone(), records[0].clone(), records[0].clone()]).unwrap();
    assert_eq!(a, b);
    let ids: Vec<_> = a.lines().map(|l| serde_json::from_str::<pbc_core::BugRecord>(l).unwrap().id).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);

    let csv = export_csv_summary(&records);
    assert_eq!(
        csv,
        "source,language,bug_type,year,count\nNVD,C,CWE-79,2021,1\nOSSFuzz,C,Integer-overflow,2023,1\n"
    );

    let path = dir.path().join("corrupt.jsonl");
    fs::write(&path, format!("{}\n{{not json\n", store::to_line(&records[0]))).unwrap();
    match read_records(&path) {
        Err(e @ StoreError::Parse { line: 2, .. }) => assert!(e.to_string().contains("corrupt.jsonl:2")),
        other => panic!("{other:?}"),
    }
}

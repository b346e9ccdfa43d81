mod common;

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use pbc_core::model::{meta, record_id, validate, TestKind};
use pbc_core::{BugRecord, BugType, CodeLocation, DiffHunk, LineSpan, ProjectRef, Source, TestSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arb_hunk() -> impl Strategy<Value = DiffHunk> {
    (
        "[a-z]{1,4}/[a-z]{1,6}\\.(c|py|ml)",
        1u32..500,
        proptest::collection::vec("[ -~]{0,12}", 0..3),
        proptest::collection::vec("[ -~]{0,12}", 0..3),
    )
        .prop_filter("one side must be non-empty", |(_, _, b, a)| !(b.is_empty() && a.is_empty()))
        .prop_map(|(file, start, b, a)| {
            let span = |v: &Vec<String>| (!v.is_empty()).then(|| LineSpan::new(start, start + v.len() as u32 - 1));
            let text = |v: &Vec<String>| v.iter().map(|l| format!("{l}\n")).collect::<String>();
            DiffHunk {
                location: CodeLocation {
                    file_path: file,
                    before_span: span(&b),
                    after_span: span(&a),
                },
                before_text: text(&b),
                after_text: text(&a),
            }
        })
}

fn arb_record() -> impl Strategy<Value = BugRecord> {
    (
        0usize..3,
        "[a-z]{1,8}",
        "[a-z]{1,8}",
        "[0-9a-f]{40}",
        proptest::collection::vec(arb_hunk(), 1..4),
        1u32..100_000,
        0i64..2_000_000_000,
    )
        .prop_map(|(src, owner, name, sha, hunks, n, secs)| {
            let mut m = BTreeMap::new();
            let (source, bug_type, tests) = match src {
                0 => {
                    m.insert(meta::CVE_ID.to_string(), format!("CVE-2021-{n}"));
                    m.insert(meta::CWE_ID.to_string(), format!("CWE-{n}"));
                    (Source::Nvd, BugType::CweId(format!("CWE-{n}")), None)
                }
                1 => {
                    m.insert(meta::OSSFUZZ_ISSUE_ID.to_string(), n.to_string());
                    let t = TestSpec {
                        name: format!("ossfuzz-{n}"),
                        kind: TestKind::New,
                        payload_ref: Some(format!("testcases/{n}")),
                    };
                    (Source::OssFuzz, BugType::CrashType("Heap-buffer-overflow".into()), Some(vec![t]))
                }
                _ => {
                    m.insert(meta::RULE_ID.to_string(), (n % 16 + 1).to_string());
                    let t = TestSpec {
                        name: "test_main".into(),
                        kind: TestKind::Existing,
                        payload_ref: None,
                    };
                    let ty = BugType::TestFailure {
                        kind: pbc_core::model::FailureKind::Assertion,
                        message: "boom".into(),
                    };
                    (Source::Injection, ty, Some(vec![t]))
                }
            };
            BugRecord::new(
                source,
                ProjectRef::new("github.com", &owner, &name, "C"),
                sha.clone(),
                sha.chars().rev().collect(),
                hunks,
                bug_type,
                tests,
                m,
                DateTime::from_timestamp(secs, 0).unwrap(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generated_records_validate_and_round_trip(r in arb_record()) {
        prop_assert_eq!(validate(&r), vec![]);
        let line = serde_json::to_string(&r).unwrap();
        let back: BugRecord = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(record_id(&back), r.id.clone());
    }

    #[test]
    fn validate_is_total(mut r in arb_record(), start in 0u32..3, end in 0u32..3, host in "[ -~]{0,10}") {
        r.hunks[0].location.before_span = Some(LineSpan { start, end });
        r.project.host = host;
        r.metadata.clear();
        // Only has to return; any list is acceptable.
        let _ = validate(&r);
    }
}

/// Canonical fields that feed the id, drawn from small alphabets so that
/// collisions of the inputs themselves are common.
#[test]
fn record_id_has_no_collisions_over_1e5_records() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut canon = HashSet::new();
    let mut ids = HashSet::new();
    for _ in 0..100_000 {
        let source = Source::ALL[rng.random_range(0..3)];
        let owner = format!("o{}", rng.random_range(0..20));
        let name = format!("n{}", rng.random_range(0..20));
        let fix: String = format!("{:040x}", rng.random_range(0..400u32));
        let key = rng.random_range(0..40u32);
        let line = rng.random_range(1..30u32);
        let before = format!("b{}", rng.random_range(0..5u32));
        let after = format!("a{}", rng.random_range(0..5u32));

        let mut m = BTreeMap::new();
        let bug_type = match source {
            Source::Nvd => {
                m.insert(meta::CVE_ID.to_string(), format!("CVE-2020-{key}"));
                BugType::CweId("CWE-79".into())
            }
            Source::OssFuzz => {
                m.insert(meta::OSSFUZZ_ISSUE_ID.to_string(), key.to_string());
                BugType::CrashType("Integer-overflow".into())
            }
            Source::Injection => {
                m.insert(meta::RULE_ID.to_string(), (key % 16 + 1).to_string());
                BugType::CompileDiagnostic {
                    code: "type mismatch".into(),
                    message: String::new(),
                }
            }
        };
        let bug_ref = m.values().next().unwrap().clone();
        let r = BugRecord::new(
            source,
            ProjectRef::new("github.com", &owner, &name, "C"),
            fix.clone(),
            "0".repeat(40),
            vec![common::hunk("f.c", line, &before, &after)],
            bug_type,
            None,
            m,
            DateTime::<Utc>::UNIX_EPOCH,
        );
        let fresh = canon.insert((source, owner, name, fix, bug_ref, line, before, after));
        assert_eq!(fresh, ids.insert(r.id.clone()), "id collision or instability at {}", r.id);
    }
    assert_eq!(canon.len(), ids.len());
    assert!(ids.len() > 90_000);
}

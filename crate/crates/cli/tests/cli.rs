use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pbc_core::testkit;

fn pbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbc"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .env_remove(pbc_core::nvd::API_KEY_ENV)
        .output()
        .unwrap()
}

fn fixture(rel: &str) -> String {
    testkit::fixtures_dir().join(rel).to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn inject_matches_the_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let stats = dir.path().join("stats.txt");
    let o = pbc(&[
        "-q", "inject", "--project", &fixture("minilang-demo"), "--adapter", "minilang",
        "--seed", "42", "--out", s(&out), "--stats", s(&stats),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    assert_eq!(fs::read(&out).unwrap(), fs::read(fixture("golden/minilang-demo-seed42.jsonl")).unwrap());
    let report = fs::read_to_string(&stats).unwrap();
    assert!(report.contains("candidates=51\n"));
}

#[test]
fn inject_output_is_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("r{jobs}.jsonl"));
        let o = pbc(&[
            "-q", "inject", "--project", &fixture("minilang-rules"), "--seed", "7", "--jobs", jobs,
            "--test-timeout", "0.5", "--out", s(&out), "--stats", s(&dir.path().join("s")),
        ]);
        assert_eq!(o.status.code(), Some(0));
        files.push(fs::read(out).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn usage_errors_exit_2() {
    let o = pbc(&["inject", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let o = pbc(&["inject", "--project", &fixture("minilang-demo"), "--jobs", "0", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));

    let o = pbc(&["track", "nvd", "--fixtures", "/nonexistent/pages", "--repos", "/tmp", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));

    let o = pbc(&["track", "nvd", "--fixtures", "a", "--live", "--repos", "/tmp", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn live_nvd_without_network_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // Port 9 on loopback refuses connections, so no traffic leaves the host.
    let o = pbc(&[
        "track", "nvd", "--live", "--endpoint", "http://127.0.0.1:9/", "--max-retries", "1",
        "--repos", s(dir.path()), "--out", s(&dir.path().join("x.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gave up after 2 attempts"));
    assert!(!dir.path().join("x.jsonl").exists());
}

#[test]
fn trackers_stats_and_exports_from_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let mirror = dir.path().join("mirror");
    testkit::build_nvd_mirror(&mirror);
    let (ffmpeg, minicalc) = testkit::build_ossfuzz_mirror(&mirror);
    let nvd = dir.path().join("nvd.jsonl");
    let o = pbc(&[
        "track", "nvd", "--fixtures", &fixture("nvd/pages"), "--repos", s(&mirror), "--out", s(&nvd),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("qualifying=7\n"));
    assert_eq!(fs::read_to_string(&nvd).unwrap().lines().count(), 5);

    let ff = dir.path().join("ff.jsonl");
    let o = pbc(&[
        "-q", "track", "ossfuzz", "--repo", s(&ffmpeg), "--fixtures", &fixture("ossfuzz"),
        "--project", "github.com/FFmpeg/FFmpeg", "--language", "C", "--out", s(&ff),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(&ff).unwrap().contains(r#""bug_type":{"kind":"crash_type","value":"Integer-overflow"}"#));

    let mc = dir.path().join("data/mc.jsonl");
    let o = pbc(&[
        "-q", "track", "ossfuzz", "--repo", s(&minicalc), "--fixtures", &fixture("ossfuzz"),
        "--project", "github.com/minicalc/minicalc", "--language", "MiniLang", "--adapter", "minilang",
        "--out", s(&mc),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("data/testcases/60001").is_file());
    let o = pbc(&["-q", "reproduce", "--records", s(&mc), "--repo", s(&minicalc)]);
    assert_eq!(o.status.code(), Some(0));
    let verdicts = String::from_utf8(o.stdout).unwrap();
    assert_eq!(verdicts.lines().filter(|l| l.ends_with("\treproducible")).count(), 1);
    assert_eq!(verdicts.lines().filter(|l| l.ends_with("\tnot-reproducible")).count(), 1);

    let o = pbc(&["stats", "--in", s(&nvd), s(&ff), s(&mc)]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("total\t9\t4\n"), "{text}");

    let o = pbc(&["report", "years", "--in", s(&nvd), s(&ff), s(&mc), "--cutoff", "2022"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("2023\t0\t4\t0\t4\n"), "{text}");
    assert!(text.ends_with(">=2022\t1\t4\t0\t5\n"), "{text}");

    let a = pbc(&["export", "--in", s(&mc), s(&nvd), "--format", "jsonl"]).stdout;
    let b = pbc(&["export", "--in", s(&nvd), s(&mc), s(&nvd), "--format", "jsonl"]).stdout;
    assert_eq!(a, b);
    let csv = dir.path().join("summary.csv");
    let o = pbc(&["export", "--in", s(&ff), "--format", "csv-summary", "--out", s(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(&csv).unwrap(),
        "source,language,bug_type,year,count\nOSSFuzz,C,Integer-overflow,2023,1\n"
    );
}

#[test]
fn corrupt_input_is_a_pipeline_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "\n{\n").unwrap();
    let o = pbc(&["export", "--in", s(&bad), "--format", "jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.jsonl:2"));
}

#[test]
fn injection_records_reproduce_from_the_project() {
    let o = pbc(&[
        "-q", "reproduce", "--records", &fixture("golden/minilang-demo-seed42.jsonl"),
        "--project", &fixture("minilang-demo"),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 14);
    assert!(text.lines().all(|l| l.ends_with("\treproducible")));
}

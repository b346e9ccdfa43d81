//! Deterministic fixture repositories for tests and examples.
//!
//! Commits are made with fixed identities and timestamps and with user and
//! system git configuration ignored, so commit ids are stable across machines.

use std::cell::Cell;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

pub struct GitFixture {
    dir: Option<TempDir>,
    path: PathBuf,
    clock: Cell<i64>,
}

/// 2023-01-01T00:00:00Z; automatic commit dates count up from here.
const BASE_EPOCH: i64 = 1_672_531_200;

impl GitFixture {
    /// Fresh repository in a temporary directory.
    pub fn new() -> Self {
        let dir = TempDir::new().expect("tempdir");
        let path = dir.path().to_path_buf();
        let fx = GitFixture {
            dir: Some(dir),
            path,
            clock: Cell::new(BASE_EPOCH),
        };
        fx.git(&["init", "-q", "-b", "main"]);
        fx
    }

    /// Fresh repository at `path`, which must not exist yet or be empty.
    pub fn at(path: &Path) -> Self {
        fs::create_dir_all(path).expect("create repo dir");
        let fx = GitFixture {
            dir: None,
            path: path.to_path_buf(),
            clock: Cell::new(BASE_EPOCH),
        };
        fx.git(&["init", "-q", "-b", "main"]);
        fx
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Keeps the directory on disk after the fixture is dropped.
    pub fn persist(mut self) -> PathBuf {
        if let Some(d) = self.dir.take() {
            let _ = d.keep();
        }
        self.path.clone()
    }

    pub fn git(&self, args: &[&str]) -> String {
        let when = format!("@{} +0000", self.clock.get());
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.path)
            .args(args)
            .env("GIT_CONFIG_GLOBAL", "/dev/null")
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_AUTHOR_NAME", "Fixture Author")
            .env("GIT_AUTHOR_EMAIL", "author@example.org")
            .env("GIT_COMMITTER_NAME", "Fixture Author")
            .env("GIT_COMMITTER_EMAIL", "author@example.org")
            .env("GIT_AUTHOR_DATE", &when)
            .env("GIT_COMMITTER_DATE", &when)
            .output()
            .expect("run git");
        assert!(
            out.status.success(),
            "git {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8_lossy(&out.stdout).trim().to_string()
    }

    pub fn write(&self, rel: &str, text: &str) {
        self.write_bytes(rel, text.as_bytes());
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) {
        let p = self.path.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, bytes).unwrap();
    }

    pub fn remove(&self, rel: &str) {
        fs::remove_file(self.path.join(rel)).unwrap();
    }

    /// Writes `files`, stages everything and commits. Returns the new sha.
    pub fn commit(&self, message: &str, files: &[(&str, &str)]) -> String {
        for (rel, text) in files {
            self.write(rel, text);
        }
        self.git(&["add", "-A"]);
        self.git(&["commit", "-q", "--allow-empty", "-m", message]);
        self.clock.set(self.clock.get() + 86_400);
        self.git(&["rev-parse", "HEAD"])
    }

    /// Like [`commit`](Self::commit) at an explicit unix time.
    pub fn commit_at(&self, epoch: i64, message: &str, files: &[(&str, &str)]) -> String {
        self.clock.set(epoch);
        self.commit(message, files)
    }
}

impl Default for GitFixture {
    fn default() -> Self {
        Self::new()
    }
}

/// `total` lines of filler with `lines` spliced in starting at line `at`.
pub fn filler_file(name: &str, total: usize, at: usize, lines: &[&str]) -> String {
    let mut out = String::new();
    let mut n = 1;
    while n < at {
        out.push_str(&format!("/* {name}: filler line {n} */\n"));
        n += 1;
    }
    for l in lines {
        out.push_str(l);
        out.push('\n');
        n += 1;
    }
    while n <= total {
        out.push_str(&format!("/* {name}: trailing line {n} */\n"));
        n += 1;
    }
    out
}

/// A repository plus the commit of interest.
pub struct FixtureCommit {
    pub repo: GitFixture,
    pub fix: String,
}

pub const TAGLIB_FILE: &str = "taglib/toolkit/tbytevector.cpp";
pub const TAGLIB_BUGGY: &str = "  if(length<0xffffffff && length+index < size())";
pub const TAGLIB_FIXED: &str = "  if(length < size() - index)";

/// TagLib overflow fix at line 366.
pub fn build_taglib(repo: GitFixture) -> (GitFixture, String) {
    let buggy = filler_file("tbytevector", 420, 366, &[TAGLIB_BUGGY]);
    let fixed = filler_file("tbytevector", 420, 366, &[TAGLIB_FIXED]);
    repo.commit_at(1_300_000_000, "Import TagLib toolkit", &[(TAGLIB_FILE, &buggy)]);
    let fix = repo.commit_at(
        1_331_000_000,
        "Fix integer overflow in ByteVector::find\n\nCVE-2012-1584",
        &[(TAGLIB_FILE, &fixed)],
    );
    (repo, fix)
}

pub fn taglib_fix() -> FixtureCommit {
    let (repo, fix) = build_taglib(GitFixture::new());
    FixtureCommit { repo, fix }
}

pub const FFMPEG_FILE: &str = "libavcodec/aacdec_template.c";

/// FFmpeg integer overflow fix at lines 2859-2860, linked to issue 57986.
pub fn build_ffmpeg(repo: GitFixture) -> (GitFixture, String) {
    let buggy = filler_file(
        "aacdec_template",
        2900,
        2859,
        &[
            "            buf[i + 0] = - (USE_FIXED + 1)*buf[i + 0];",
            "            buf[i + 1] =  (USE_FIXED + 1)*buf[i + 1];",
        ],
    );
    let fixed = filler_file(
        "aacdec_template",
        2900,
        2859,
        &[
            "            buf[i + 0] = -(int)(USE_FIXED+1U)*buf[i + 0];",
            "            buf[i + 1] =    (int)(USE_FIXED + 1U)*buf[i + 1];",
        ],
    );
    repo.commit_at(1_680_000_000, "Import AAC decoder", &[(FFMPEG_FILE, &buggy)]);
    let fix = repo.commit_at(
        1_681_000_000,
        "avcodec/aacdec_template: Fix integer overflow\n\n\
         Fixes: signed integer overflow: -2 * -1073741824 cannot be represented in type 'int'\n\
         Fixes: https://bugs.chromium.org/p/oss-fuzz/issues/detail?id=57986",
        &[(FFMPEG_FILE, &fixed)],
    );
    (repo, fix)
}

pub fn ffmpeg_fix() -> FixtureCommit {
    let (repo, fix) = build_ffmpeg(GitFixture::new());
    FixtureCommit { repo, fix }
}

pub const JFREECHART_FILE: &str = "src/main/java/org/jfree/chart/plot/XYPlot.java";

/// JFreeChart null guard: line 4493 becomes lines 4493-4495.
pub fn jfreechart_fix() -> FixtureCommit {
    let repo = GitFixture::new();
    // Shared head and tail so that only the guarded line differs.
    let head = filler_file("XYPlot", 4492, 4493, &[]);
    let tail: String = (1..=107).map(|k| format!("/* XYPlot: tail line {k} */\n")).collect();
    let buggy = format!("{head}        Collection c = r.getAnnotations();\n{tail}");
    let fixed = format!(
        "{head}        if (r != null) {{\n            Collection c = r.getAnnotations();\n        }}\n{tail}"
    );
    repo.commit("Import XYPlot", &[(JFREECHART_FILE, &buggy)]);
    let fix = repo.commit("Guard against null renderer", &[(JFREECHART_FILE, &fixed)]);
    FixtureCommit { repo, fix }
}

pub const MINICALC_CALC_BUGGY: &str = "\
// Integer helpers.
int safe_div(int a, int b) {
    return a / b;
}

int twice(int a) {
    return a * 2;
}
";

pub const MINICALC_CALC_FIXED: &str = "\
// Integer helpers.
int safe_div(int a, int b) {
    if (b == 0) {
        return 0;
    }
    return a / b;
}

int twice(int a) {
    return a * 2;
}
";

pub const MINICALC_TEXT_BUGGY: &str = "\
str first_char(str s) {
    return char_at(s, 0);
}
";

pub const MINICALC_TEXT_FIXED: &str = "\
str first_char(str s) {
    if (len(s) == 0) {
        return \"\";
    }
    return char_at(s, 0);
}
";

pub const MINICALC_TESTS: &str = "\
void test_div() {
    assert(safe_div(6, 3) == 2, \"six by three\");
}

void test_twice() {
    assert(twice(4) == 8, \"twice four\");
}

void test_first_char() {
    assert(first_char(\"abc\") == \"a\", \"first of abc\");
}
";

/// Shas of the interesting minicalc commits.
pub struct Minicalc {
    pub repo: GitFixture,
    pub root: String,
    /// Cites two issue ids.
    pub div_fix: String,
    /// Uses the "Credit to OSS-Fuzz" convention.
    pub text_fix: String,
    pub typo: String,
}

/// A MiniLang project whose history links fixes to OSS-Fuzz issues.
pub fn build_minicalc(repo: GitFixture) -> Minicalc {
    let root = repo.commit(
        "Initial import",
        &[
            ("src/calc.ml", MINICALC_CALC_BUGGY),
            ("src/text.ml", MINICALC_TEXT_BUGGY),
            ("tests/test_calc.ml", MINICALC_TESTS),
        ],
    );
    let div_fix = repo.commit(
        "Guard division by zero\n\nFixes OSS-Fuzz #60001 and oss-fuzz issue 60002.",
        &[("src/calc.ml", MINICALC_CALC_FIXED)],
    );
    let text_fix = repo.commit(
        "Handle empty strings in first_char\n\nCredit to OSS-Fuzz, testcase 60003",
        &[("src/text.ml", MINICALC_TEXT_FIXED)],
    );
    let typo = repo.commit(
        "fix typo",
        &[(
            "src/calc.ml",
            &MINICALC_CALC_FIXED.replace("Integer helpers", "Integer helper functions"),
        )],
    );
    Minicalc {
        repo,
        root,
        div_fix,
        text_fix,
        typo,
    }
}

pub fn minicalc() -> Minicalc {
    build_minicalc(GitFixture::new())
}

/// Shas of the mirror's commits, in the order the NVD fixture cites them.
#[derive(Debug, Clone)]
pub struct Mirror {
    pub root: PathBuf,
    pub taglib_fix: String,
    pub taglib_second_fix: String,
    pub webkit_fixes: [String; 3],
}

/// Builds the `host/owner/name` mirror the NVD fixture pages point into.
pub fn build_nvd_mirror(root: &Path) -> Mirror {
    let (taglib, taglib_fix) = build_taglib(GitFixture::at(&root.join("github.com/taglib/taglib")));
    let header = "taglib/mpeg/id3v2/id3v2header.cpp";
    let buggy = "uint Header::tagSize() const {\n  return d->tagSize;\n}\n";
    let fixed = "uint Header::tagSize() const {\n  return d->tagSize & 0x0fffffff;\n}\n";
    taglib.commit_at(1_640_000_000, "Add ID3v2 header", &[(header, buggy)]);
    let taglib_second_fix = taglib.commit_at(1_650_000_000, "Mask synchsafe tag size", &[(header, fixed)]);
    taglib.persist();

    let webkit = GitFixture::at(&root.join("github.com/lite/webkit-lite"));
    let escape = "Source/Html/Escape.cpp";
    let parser = "Source/Html/Parser.cpp";
    webkit.commit_at(
        1_600_000_000,
        "Import",
        &[
            (escape, "String escape(const String& s) {\n    return s;\n}\n"),
            (parser, "void Parser::attr(Token& t) {\n    append(t.value);\n}\n\nvoid Parser::text(Token& t) {\n    append(t.raw);\n}\n"),
        ],
    );
    let w1 = webkit.commit_at(
        1_610_000_000,
        "Escape markup in attribute values",
        &[(escape, "String escape(const String& s) {\n    return htmlEscape(s);\n}\n")],
    );
    let w2 = webkit.commit_at(
        1_620_000_000,
        "Escape attribute tokens",
        &[(parser, "void Parser::attr(Token& t) {\n    append(escape(t.value));\n}\n\nvoid Parser::text(Token& t) {\n    append(t.raw);\n}\n")],
    );
    let w3 = webkit.commit_at(
        1_621_000_000,
        "Escape text tokens",
        &[(parser, "void Parser::attr(Token& t) {\n    append(escape(t.value));\n}\n\nvoid Parser::text(Token& t) {\n    append(escape(t.raw));\n}\n")],
    );
    webkit.persist();

    Mirror {
        root: root.to_path_buf(),
        taglib_fix,
        taglib_second_fix,
        webkit_fixes: [w1, w2, w3],
    }
}

/// Mirror holding the minicalc and FFmpeg repositories for OSS-Fuzz runs.
pub fn build_ossfuzz_mirror(root: &Path) -> (PathBuf, PathBuf) {
    let ffmpeg = root.join("github.com/FFmpeg/FFmpeg");
    build_ffmpeg(GitFixture::at(&ffmpeg)).0.persist();
    let minicalc = root.join("github.com/minicalc/minicalc");
    build_minicalc(GitFixture::at(&minicalc)).repo.persist();
    (ffmpeg, minicalc)
}

/// Workspace-level `fixtures/` directory.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

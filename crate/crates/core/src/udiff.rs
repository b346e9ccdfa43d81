//! Parser for `git diff -U0` output.
//!
//! Works on raw bytes so that non-UTF-8 content can be detected and the file
//! skipped instead of failing the whole diff.

use crate::model::{CodeLocation, DiffHunk, LineSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileDiff {
    /// `None` when the file is created by the change.
    pub old_path: Option<String>,
    /// `None` when the file is deleted by the change.
    pub new_path: Option<String>,
    /// Binary or non-UTF-8 content; carries no hunks.
    pub skipped: bool,
    pub hunks: Vec<DiffHunk>,
}

impl FileDiff {
    pub fn path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed diff at line {line}: {message}")]
pub struct DiffParseError {
    pub line: usize,
    pub message: String,
}

/// Parses `@@ -a[,b] +c[,d] @@` into the two spans.
fn parse_range(s: &str) -> Option<Option<LineSpan>> {
    let (start, count) = match s.split_once(',') {
        Some((a, b)) => (a.parse::<u32>().ok()?, b.parse::<u32>().ok()?),
        None => (s.parse::<u32>().ok()?, 1),
    };
    Some((count > 0).then(|| LineSpan::new(start, start + count - 1)))
}

fn parse_hunk_header(line: &str) -> Option<(Option<LineSpan>, Option<LineSpan>)> {
    let rest = line.strip_prefix("@@ -")?;
    let (ranges, _) = rest.split_once(" @@")?;
    let (old, new) = ranges.split_once(" +")?;
    Some((parse_range(old)?, parse_range(new)?))
}

/// Undoes git's C-style quoting of unusual path names.
fn unquote(raw: &[u8]) -> Vec<u8> {
    if raw.len() < 2 || raw[0] != b'"' || raw[raw.len() - 1] != b'"' {
        return raw.to_vec();
    }
    let inner = &raw[1..raw.len() - 1];
    let mut out = Vec::with_capacity(inner.len());
    let mut i = 0;
    while i < inner.len() {
        if inner[i] != b'\\' || i + 1 == inner.len() {
            out.push(inner[i]);
            i += 1;
            continue;
        }
        let c = inner[i + 1];
        i += 2;
        match c {
            b'n' => out.push(b'\n'),
            b't' => out.push(b'\t'),
            b'"' => out.push(b'"'),
            b'\\' => out.push(b'\\'),
            b'a' => out.push(7),
            b'b' => out.push(8),
            b'f' => out.push(12),
            b'v' => out.push(11),
            b'r' => out.push(b'\r'),
            b'0'..=b'7' => {
                let mut v = (c - b'0') as u32;
                let mut n = 1;
                while n < 3 && i < inner.len() && (b'0'..=b'7').contains(&inner[i]) {
                    v = v * 8 + (inner[i] - b'0') as u32;
                    i += 1;
                    n += 1;
                }
                out.push(v as u8);
            }
            other => out.push(other),
        }
    }
    out
}

/// Path from a `---`/`+++` line, without its `a/` or `b/` prefix.
fn header_path(raw: &[u8], prefix: &[u8]) -> Option<Result<String, ()>> {
    let raw = raw.strip_suffix(b"\t").unwrap_or(raw);
    if raw == b"/dev/null" {
        return None;
    }
    let unq = unquote(raw);
    let path = unq.strip_prefix(prefix).unwrap_or(&unq).to_vec();
    Some(String::from_utf8(path).map_err(|_| ()))
}

struct Pending {
    before: Option<LineSpan>,
    after: Option<LineSpan>,
    before_text: Vec<u8>,
    after_text: Vec<u8>,
    last_was_add: bool,
}

impl Pending {
    fn finish(self, file: &str) -> Result<DiffHunk, ()> {
        Ok(DiffHunk {
            location: CodeLocation {
                file_path: file.to_string(),
                before_span: self.before,
                after_span: self.after,
            },
            before_text: String::from_utf8(self.before_text).map_err(|_| ())?,
            after_text: String::from_utf8(self.after_text).map_err(|_| ())?,
        })
    }
}

struct FileState {
    old_path: Option<String>,
    new_path: Option<String>,
    skipped: bool,
    hunks: Vec<DiffHunk>,
    pending: Option<Pending>,
}

impl FileState {
    fn new() -> Self {
        FileState {
            old_path: None,
            new_path: None,
            skipped: false,
            hunks: Vec::new(),
            pending: None,
        }
    }

    fn flush_hunk(&mut self) {
        if let Some(p) = self.pending.take() {
            let path = self
                .new_path
                .clone()
                .or_else(|| self.old_path.clone())
                .unwrap_or_default();
            match p.finish(&path) {
                Ok(h) => self.hunks.push(h),
                Err(()) => self.skipped = true,
            }
        }
    }

    fn finish(mut self) -> FileDiff {
        self.flush_hunk();
        if self.skipped {
            self.hunks.clear();
        }
        FileDiff {
            old_path: self.old_path,
            new_path: self.new_path,
            skipped: self.skipped,
            hunks: self.hunks,
        }
    }
}

/// Parses zero-context unified diff output produced with `a/` and `b/`
/// prefixes. Context lines are tolerated and ignored.
pub fn parse(input: &[u8]) -> Result<Vec<FileDiff>, DiffParseError> {
    let mut files = Vec::new();
    let mut cur: Option<FileState> = None;

    for (idx, raw) in input.split_inclusive(|&b| b == b'\n').enumerate() {
        let lineno = idx + 1;
        let err = |message: &str| DiffParseError {
            line: lineno,
            message: message.to_string(),
        };
        let body = raw.strip_suffix(b"\n").unwrap_or(raw);

        if body.starts_with(b"diff --git ") {
            if let Some(f) = cur.take() {
                files.push(f.finish());
            }
            let mut st = FileState::new();
            // Paths normally come from the ---/+++ lines; the header is the
            // fallback for hunk-less entries (binary, mode-only).
            if let Ok(s) = std::str::from_utf8(&body[11..]) {
                if let Some((a, b)) = s.split_once(" b/") {
                    let a = a.strip_prefix("a/").unwrap_or(a);
                    st.old_path = Some(a.to_string());
                    st.new_path = Some(b.to_string());
                }
            }
            cur = Some(st);
            continue;
        }
        let Some(st) = cur.as_mut() else {
            continue;
        };

        if let Some(p) = st.pending.as_mut() {
            match body.first() {
                Some(b'-') => {
                    p.before_text.extend_from_slice(&raw[1..]);
                    p.last_was_add = false;
                    continue;
                }
                Some(b'+') => {
                    p.after_text.extend_from_slice(&raw[1..]);
                    p.last_was_add = true;
                    continue;
                }
                Some(b'\\') => {
                    // "\ No newline at end of file" applies to the previous line.
                    let text = if p.last_was_add {
                        &mut p.after_text
                    } else {
                        &mut p.before_text
                    };
                    if text.last() == Some(&b'\n') {
                        text.pop();
                    }
                    continue;
                }
                Some(b' ') => continue,
                _ => st.flush_hunk(),
            }
        }

        if body.starts_with(b"@@ ") {
            let line = std::str::from_utf8(body).map_err(|_| err("non-UTF-8 hunk header"))?;
            let (before, after) = parse_hunk_header(line).ok_or_else(|| err("bad hunk header"))?;
            st.pending = Some(Pending {
                before,
                after,
                before_text: Vec::new(),
                after_text: Vec::new(),
                last_was_add: false,
            });
        } else if let Some(rest) = body.strip_prefix(b"--- ") {
            match header_path(rest, b"a/") {
                None => st.old_path = None,
                Some(Ok(p)) => st.old_path = Some(p),
                Some(Err(())) => st.skipped = true,
            }
        } else if let Some(rest) = body.strip_prefix(b"+++ ") {
            match header_path(rest, b"b/") {
                None => st.new_path = None,
                Some(Ok(p)) => st.new_path = Some(p),
                Some(Err(())) => st.skipped = true,
            }
        } else if body.starts_with(b"new file mode") {
            st.old_path = None;
        } else if body.starts_with(b"deleted file mode") {
            st.new_path = None;
        } else if body.starts_with(b"Binary files ") || body.starts_with(b"GIT binary patch") {
            st.skipped = true;
        }
    }
    if let Some(f) = cur.take() {
        files.push(f.finish());
    }
    Ok(files)
}

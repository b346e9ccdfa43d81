//! Applies recorded hunks to file contents.
//!
//! Hunks carry exact spans and text, so application is positional: the text
//! at the source span is checked, then replaced.

use std::collections::BTreeMap;

use crate::model::{line_count, DiffHunk, LineSpan};
use crate::tree::SourceTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `before` -> `after`.
    Forward,
    /// `after` -> `before`.
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatchError {
    #[error("{file}: hunk {index} does not match the file contents at line {line}")]
    Mismatch { file: String, index: usize, line: u32 },
    #[error("{file}: hunk {index} lies outside the file or overlaps an earlier hunk")]
    OutOfRange { file: String, index: usize },
    #[error("{file}: hunk {index} lands at line {actual}, expected {expected}")]
    Misplaced {
        file: String,
        index: usize,
        expected: u32,
        actual: u32,
    },
}

struct Side<'a> {
    from: Option<LineSpan>,
    to: Option<LineSpan>,
    from_text: &'a str,
    to_text: &'a str,
}

fn side(h: &DiffHunk, dir: Direction) -> Side<'_> {
    let loc = &h.location;
    match dir {
        Direction::Forward => Side {
            from: loc.before_span,
            to: loc.after_span,
            from_text: &h.before_text,
            to_text: &h.after_text,
        },
        Direction::Reverse => Side {
            from: loc.after_span,
            to: loc.before_span,
            from_text: &h.after_text,
            to_text: &h.before_text,
        },
    }
}

/// Applies the hunks of one file, given in diff order.
pub fn apply_to_text(
    file: &str,
    text: &str,
    hunks: &[&DiffHunk],
    dir: Direction,
) -> Result<String, PatchError> {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut out = String::with_capacity(text.len());
    let mut out_lines: i64 = 0;
    let mut cursor = 0usize;
    let mut offset: i64 = 0;

    for (index, h) in hunks.iter().enumerate() {
        let s = side(h, dir);
        let out_of_range = || PatchError::OutOfRange {
            file: file.to_string(),
            index,
        };
        let (start, len) = match (s.from, s.to) {
            (Some(f), _) => (f.start as i64 - 1, f.len() as usize),
            // A pure insertion sits where the target side says, shifted back
            // by the net growth of earlier hunks.
            (None, Some(t)) => (t.start as i64 - 1 - offset, 0),
            (None, None) => return Err(out_of_range()),
        };
        if start < cursor as i64 || start as usize + len > lines.len() {
            return Err(out_of_range());
        }
        let start = start as usize;
        for l in &lines[cursor..start] {
            out.push_str(l);
        }
        out_lines += (start - cursor) as i64;
        let current: String = lines[start..start + len].concat();
        if current != s.from_text {
            return Err(PatchError::Mismatch {
                file: file.to_string(),
                index,
                line: start as u32 + 1,
            });
        }
        if let Some(t) = s.to {
            if out_lines + 1 != t.start as i64 {
                return Err(PatchError::Misplaced {
                    file: file.to_string(),
                    index,
                    expected: t.start,
                    actual: (out_lines + 1) as u32,
                });
            }
        }
        out.push_str(s.to_text);
        let added = line_count(s.to_text) as i64;
        out_lines += added;
        offset += added - len as i64;
        cursor = start + len;
    }
    for l in &lines[cursor..] {
        out.push_str(l);
    }
    Ok(out)
}

/// Applies hunks across a tree. Files missing from the tree start empty;
/// files whose every hunk empties them, and that end up empty, are removed.
pub fn apply_to_tree(
    tree: &SourceTree,
    hunks: &[DiffHunk],
    dir: Direction,
) -> Result<SourceTree, PatchError> {
    let mut by_file: BTreeMap<&str, Vec<&DiffHunk>> = BTreeMap::new();
    for h in hunks {
        by_file.entry(h.file()).or_default().push(h);
    }
    let mut out = tree.clone();
    for (file, hs) in by_file {
        let text = tree.get(file).unwrap_or("");
        let patched = apply_to_text(file, text, &hs, dir)?;
        let removes_all = hs.iter().all(|h| side(h, dir).to.is_none());
        if patched.is_empty() && removes_all {
            out.remove(file);
        } else {
            out.insert(file, patched);
        }
    }
    Ok(out)
}

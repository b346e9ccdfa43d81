//! JSONL persistence and dataset statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Utc};
use thiserror::Error;

use crate::model::{validate, BugRecord, ProjectRef, Source, Violation};

/// Years at or below this are folded into one row of the year report.
pub const DEFAULT_YEAR_FLOOR: i32 = 2015;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record {id} is invalid: {}", join(violations))]
    InvalidRecord { id: String, violations: Vec<Violation> },
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Appended,
    Duplicate,
}

/// One record as a single JSON line, without the trailing newline.
pub fn to_line(record: &BugRecord) -> String {
    serde_json::to_string(record).expect("records always serialize")
}

pub fn check(record: &BugRecord) -> Result<(), StoreError> {
    let violations = validate(record);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(StoreError::InvalidRecord {
            id: record.id.clone(),
            violations,
        })
    }
}

/// Reads one JSONL file. Blank lines are skipped; anything else must be a
/// record.
pub fn read_records(path: &Path) -> Result<Vec<BugRecord>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            file: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_all<P: AsRef<Path>>(files: &[P]) -> Result<Vec<BugRecord>, StoreError> {
    let mut out = Vec::new();
    for f in files {
        out.extend(read_records(f.as_ref())?);
    }
    Ok(out)
}

/// Append-only writer that remembers every id already in the file.
pub struct DatasetWriter {
    path: PathBuf,
    file: File,
    seen: HashSet<String>,
}

impl DatasetWriter {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let seen = if path.exists() {
            read_records(path)?.into_iter().map(|r| r.id).collect()
        } else {
            HashSet::new()
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(DatasetWriter {
            path: path.to_path_buf(),
            file,
            seen,
        })
    }

    pub fn append(&mut self, record: &BugRecord) -> Result<AppendOutcome, StoreError> {
        check(record)?;
        if self.seen.contains(&record.id) {
            return Ok(AppendOutcome::Duplicate);
        }
        let mut line = to_line(record);
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .map_err(io_err(&self.path))?;
        self.seen.insert(record.id.clone());
        Ok(AppendOutcome::Appended)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Appends a single record to `path`.
pub fn append(record: &BugRecord, path: &Path) -> Result<AppendOutcome, StoreError> {
    DatasetWriter::open(path)?.append(record)
}

/// Validated, deduplicated, id-sorted JSONL rendering.
pub fn export_jsonl(records: &[BugRecord]) -> Result<String, StoreError> {
    let mut by_id: BTreeMap<&str, &BugRecord> = BTreeMap::new();
    for r in records {
        check(r)?;
        by_id.entry(r.id.as_str()).or_insert(r);
    }
    let mut out = String::new();
    for r in by_id.values() {
        out.push_str(&to_line(r));
        out.push('\n');
    }
    Ok(out)
}

/// Writes `records` to `path` in export order, replacing the file.
pub fn write_sorted(records: &[BugRecord], path: &Path) -> Result<(), StoreError> {
    let text = export_jsonl(records)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// `n/d` as a percentage with one decimal, rounded half up. Integer
/// arithmetic only, so `1455/8487` is exactly `17.1%`.
pub fn percent(n: u64, d: u64) -> String {
    if d == 0 {
        return "0.0%".to_string();
    }
    let tenths = (2000 * n as u128 + d as u128) / (2 * d as u128);
    format!("{}.{}%", tenths / 10, tenths % 10)
}

/// Year a record is filed under: the fix date when known, otherwise the
/// creation time unless it is the epoch placeholder.
pub fn record_year(r: &BugRecord) -> Option<i32> {
    r.fix_year()
        .or_else(|| (r.created_at != DateTime::<Utc>::UNIX_EPOCH).then(|| r.created_at.year()))
}

pub type SourceCounts = BTreeMap<Source, u64>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub totals: SourceCounts,
    pub by_language: BTreeMap<String, SourceCounts>,
    pub by_type: BTreeMap<Source, BTreeMap<String, u64>>,
    /// `None` collects records without any usable date.
    pub by_year: BTreeMap<Option<i32>, SourceCounts>,
    pub project_count: SourceCounts,
    pub project_count_overall: u64,
}

impl DatasetStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a BugRecord>) -> Self {
        let mut s = DatasetStats::default();
        let mut projects: BTreeMap<Source, BTreeSet<&ProjectRef>> = BTreeMap::new();
        let mut all_projects = BTreeSet::new();
        for r in records {
            *s.totals.entry(r.source).or_default() += 1;
            *s.by_language
                .entry(r.project.language.clone())
                .or_default()
                .entry(r.source)
                .or_default() += 1;
            *s.by_type
                .entry(r.source)
                .or_default()
                .entry(r.bug_type.display_key())
                .or_default() += 1;
            *s.by_year
                .entry(record_year(r))
                .or_default()
                .entry(r.source)
                .or_default() += 1;
            projects.entry(r.source).or_default().insert(&r.project);
            all_projects.insert(&r.project);
        }
        s.project_count = projects.into_iter().map(|(k, v)| (k, v.len() as u64)).collect();
        s.project_count_overall = all_projects.len() as u64;
        s
    }

    pub fn total(&self) -> u64 {
        self.totals.values().sum()
    }

    pub fn source_total(&self, source: Source) -> u64 {
        self.totals.get(&source).copied().unwrap_or(0)
    }

    /// The `k` most frequent bug types of a source, ties broken by key.
    pub fn top_types(&self, source: Source, k: usize) -> Vec<(String, u64)> {
        let mut v: Vec<(String, u64)> = self
            .by_type
            .get(&source)
            .map(|m| m.iter().map(|(t, n)| (t.clone(), *n)).collect())
            .unwrap_or_default();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(k);
        v
    }

    /// Share of `key` among the records of `source`.
    pub fn type_share(&self, source: Source, key: &str) -> String {
        let n = self
            .by_type
            .get(&source)
            .and_then(|m| m.get(key))
            .copied()
            .unwrap_or(0);
        percent(n, self.source_total(source))
    }

    /// Plain-text tables: totals, languages, top types per source.
    pub fn render(&self, top_k: usize) -> String {
        let mut out = String::new();
        out.push_str("source\trecords\tprojects\n");
        for src in Source::ALL {
            out.push_str(&format!(
                "{src}\t{}\t{}\n",
                self.source_total(src),
                self.project_count.get(&src).copied().unwrap_or(0)
            ));
        }
        out.push_str(&format!(
            "total\t{}\t{}\n",
            self.total(),
            self.project_count_overall
        ));

        out.push_str("\nlanguage\tNVD\tOSSFuzz\tInjection\n");
        for (lang, counts) in &self.by_language {
            out.push_str(lang);
            for src in Source::ALL {
                out.push_str(&format!("\t{}", counts.get(&src).copied().unwrap_or(0)));
            }
            out.push('\n');
        }

        for src in Source::ALL {
            let top = self.top_types(src, top_k);
            if top.is_empty() {
                continue;
            }
            out.push_str(&format!("\ntop types ({src})\n"));
            let total = self.source_total(src);
            for (key, n) in top {
                out.push_str(&format!("{key}\t{n}\t{}\n", percent(n, total)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum YearLabel {
    Year(i32),
    AtOrBelow(i32),
    Unknown,
}

impl fmt::Display for YearLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            YearLabel::Year(y) => write!(f, "{y}"),
            YearLabel::AtOrBelow(y) => write!(f, "<={y}"),
            YearLabel::Unknown => f.write_str("unknown"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YearRow {
    pub label: YearLabel,
    pub counts: SourceCounts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YearReport {
    pub cutoff: i32,
    pub floor: i32,
    /// Newest year first, then the grouped floor row, then `unknown`.
    pub rows: Vec<YearRow>,
    /// Records dated in or after the cutoff year.
    pub since_cutoff: SourceCounts,
}

impl YearReport {
    pub fn count(&self, label: &YearLabel, source: Source) -> u64 {
        self.rows
            .iter()
            .find(|r| &r.label == label)
            .and_then(|r| r.counts.get(&source))
            .copied()
            .unwrap_or(0)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("year\tNVD\tOSSFuzz\tInjection\ttotal\n");
        let mut line = |label: String, counts: &SourceCounts| {
            out.push_str(&label);
            for src in Source::ALL {
                out.push_str(&format!("\t{}", counts.get(&src).copied().unwrap_or(0)));
            }
            out.push_str(&format!("\t{}\n", counts.values().sum::<u64>()));
        };
        for row in &self.rows {
            line(row.label.to_string(), &row.counts);
        }
        line(format!(">={}", self.cutoff), &self.since_cutoff);
        out
    }
}

pub fn year_report<'a>(
    records: impl IntoIterator<Item = &'a BugRecord>,
    cutoff: i32,
    floor: i32,
) -> YearReport {
    let mut rows: BTreeMap<YearLabel, SourceCounts> = BTreeMap::new();
    let mut since_cutoff = SourceCounts::new();
    for r in records {
        let label = match record_year(r) {
            Some(y) if y <= floor => YearLabel::AtOrBelow(floor),
            Some(y) => YearLabel::Year(y),
            None => YearLabel::Unknown,
        };
        if record_year(r).is_some_and(|y| y >= cutoff) {
            *since_cutoff.entry(r.source).or_default() += 1;
        }
        *rows.entry(label).or_default().entry(r.source).or_default() += 1;
    }
    let mut dated: Vec<YearRow> = Vec::new();
    let mut tail: Vec<YearRow> = Vec::new();
    for (label, counts) in rows {
        match label {
            YearLabel::Year(_) => dated.push(YearRow { label, counts }),
            _ => tail.push(YearRow { label, counts }),
        }
    }
    dated.reverse();
    dated.extend(tail);
    YearReport {
        cutoff,
        floor,
        rows: dated,
        since_cutoff,
    }
}

/// Stats flattened to `source,language,bug_type,year,count` rows, sorted.
pub fn export_csv_summary(records: &[BugRecord]) -> String {
    let mut groups: BTreeMap<(Source, String, String, String), u64> = BTreeMap::new();
    for r in records {
        let year = record_year(r).map_or_else(|| "unknown".to_string(), |y| y.to_string());
        *groups
            .entry((
                r.source,
                r.project.language.clone(),
                r.bug_type.display_key(),
                year,
            ))
            .or_default() += 1;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "language", "bug_type", "year", "count"])
        .expect("in-memory write");
    for ((src, lang, ty, year), n) in groups {
        w.write_record([src.as_str(), &lang, &ty, &year, &n.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

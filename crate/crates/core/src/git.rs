//! Commit-pair extraction through the `git` command-line tool.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use chrono::{DateTime, FixedOffset};
use tracing::debug;

use crate::model::DiffHunk;
use crate::tree::SourceTree;
use crate::udiff;

#[derive(Debug, thiserror::Error)]
pub enum GitError {
    #[error("revision `{0}` not found")]
    RevisionNotFound(String),
    #[error("commit {0} has no parent")]
    RootCommit(String),
    #[error("commit {0} is a merge")]
    MergeCommit(String),
    #[error("repository {path} unavailable: {reason}")]
    RepoUnavailable { path: PathBuf, reason: String },
    #[error("git {args}: {stderr}")]
    Command { args: String, stderr: String },
    #[error(transparent)]
    Diff(#[from] udiff::DiffParseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CommitPair {
    pub repo_path: PathBuf,
    pub fix_revision: String,
    pub parent_revision: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Before,
    After,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitInfo {
    pub sha: String,
    pub parents: Vec<String>,
    pub committed: DateTime<FixedOffset>,
    pub message: String,
}

/// Handle on a local checkout.
#[derive(Debug, Clone)]
pub struct Repo {
    path: PathBuf,
}

impl Repo {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, GitError> {
        let path = path.into();
        if !path.is_dir() {
            return Err(GitError::RepoUnavailable {
                path,
                reason: "not a directory".into(),
            });
        }
        let repo = Repo { path };
        repo.run(&["rev-parse", "--git-dir"])
            .map_err(|e| GitError::RepoUnavailable {
                path: repo.path.clone(),
                reason: e.to_string(),
            })?;
        Ok(repo)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C")
            .arg(&self.path)
            .args(["-c", "core.quotepath=false"])
            .env("GIT_TERMINAL_PROMPT", "0")
            .stdin(Stdio::null());
        cmd
    }

    fn run(&self, args: &[&str]) -> Result<Vec<u8>, GitError> {
        debug!(repo = %self.path.display(), ?args, "git");
        let out = self.command().args(args).output()?;
        if !out.status.success() {
            return Err(GitError::Command {
                args: args.join(" "),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(out.stdout)
    }

    fn run_text(&self, args: &[&str]) -> Result<String, GitError> {
        Ok(String::from_utf8_lossy(&self.run(args)?).into_owned())
    }

    /// Full sha of `expr`, or `RevisionNotFound`.
    pub fn rev_parse(&self, expr: &str) -> Result<String, GitError> {
        let spec = format!("{expr}^{{commit}}");
        let out = self
            .command()
            .args(["rev-parse", "--verify", "--quiet", "--end-of-options", &spec])
            .output()?;
        if !out.status.success() {
            return Err(GitError::RevisionNotFound(expr.to_string()));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    pub fn commit_info(&self, rev: &str) -> Result<CommitInfo, GitError> {
        let sha = self.rev_parse(rev)?;
        let raw = self.run_text(&["show", "-s", "--format=%H%x00%P%x00%cI%x00%B", &sha])?;
        let mut parts = raw.splitn(4, '\0');
        let sha = parts.next().unwrap_or_default().to_string();
        let parents = parts
            .next()
            .unwrap_or_default()
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let date = parts.next().unwrap_or_default();
        let committed = DateTime::parse_from_rfc3339(date).map_err(|e| GitError::Command {
            args: "show".into(),
            stderr: format!("bad commit date `{date}`: {e}"),
        })?;
        let message = parts.next().unwrap_or_default().trim_end().to_string();
        Ok(CommitInfo {
            sha,
            parents,
            committed,
            message,
        })
    }

    /// URL of the named remote, if configured.
    pub fn remote_url(&self, remote: &str) -> Option<String> {
        let key = format!("remote.{remote}.url");
        let url = self.run_text(&["config", "--get", &key]).ok()?;
        let url = url.trim();
        (!url.is_empty()).then(|| url.to_string())
    }

    /// Non-merge commits reachable from HEAD, newest first, with messages.
    pub fn log_messages(&self) -> Result<Vec<(String, String)>, GitError> {
        let raw = self.run_text(&["log", "--no-merges", "--format=%H%x00%B%x1e"])?;
        Ok(raw
            .split('\x1e')
            .filter_map(|rec| {
                let (sha, msg) = rec.trim_start_matches('\n').split_once('\0')?;
                Some((sha.to_string(), msg.trim_end().to_string()))
            })
            .collect())
    }

    /// Every UTF-8 text file in the tree of `rev`.
    pub fn read_tree(&self, rev: &str) -> Result<SourceTree, GitError> {
        let sha = self.rev_parse(rev)?;
        let listing = self.run(&["ls-tree", "-r", "-z", &sha])?;
        let mut entries = Vec::new();
        for rec in listing.split(|&b| b == 0).filter(|r| !r.is_empty()) {
            let Some(tab) = rec.iter().position(|&b| b == b'\t') else {
                continue;
            };
            let meta = String::from_utf8_lossy(&rec[..tab]);
            let fields: Vec<&str> = meta.split_whitespace().collect();
            if fields.len() != 3 || fields[1] != "blob" {
                continue;
            }
            if let Ok(path) = String::from_utf8(rec[tab + 1..].to_vec()) {
                entries.push((fields[2].to_string(), path));
            }
        }
        let blobs = self.cat_blobs(entries.iter().map(|(oid, _)| oid.as_str()))?;
        let mut files = BTreeMap::new();
        for ((_, path), blob) in entries.into_iter().zip(blobs) {
            if let Some(text) = text_content(blob) {
                files.insert(path, text);
            }
        }
        Ok(SourceTree::from_files(files))
    }

    fn cat_blobs<'a>(&self, oids: impl Iterator<Item = &'a str>) -> Result<Vec<Vec<u8>>, GitError> {
        let mut child = self
            .command()
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let request: String = oids.map(|o| format!("{o}\n")).collect();
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(request.as_bytes()));
        let mut reader = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut out = Vec::new();
        let mut header = String::new();
        loop {
            header.clear();
            if reader.read_line(&mut header)? == 0 {
                break;
            }
            let fields: Vec<&str> = header.split_whitespace().collect();
            if fields.len() != 3 {
                // "<oid> missing"
                out.push(Vec::new());
                continue;
            }
            let size: usize = fields[2].parse().map_err(|_| GitError::Command {
                args: "cat-file --batch".into(),
                stderr: format!("bad header `{}`", header.trim()),
            })?;
            let mut buf = vec![0; size + 1];
            reader.read_exact(&mut buf)?;
            buf.pop();
            out.push(buf);
        }
        writer.join().expect("writer thread")?;
        child.wait()?;
        Ok(out)
    }

    fn show_file(&self, rev: &str, path: &str) -> Result<Vec<u8>, GitError> {
        self.run(&["show", &format!("{rev}:{path}")])
    }
}

fn text_content(blob: Vec<u8>) -> Option<String> {
    if blob.contains(&0) {
        return None;
    }
    String::from_utf8(blob).ok()
}

/// Resolves `revision_expr` to a fix commit and its only parent.
pub fn resolve_commit(repo_path: &Path, revision_expr: &str) -> Result<CommitPair, GitError> {
    let repo = Repo::open(repo_path)?;
    let sha = repo.rev_parse(revision_expr)?;
    let line = repo.run_text(&["rev-list", "--parents", "-n", "1", &sha])?;
    let mut ids = line.split_whitespace().skip(1);
    let parent = ids.next().ok_or_else(|| GitError::RootCommit(sha.clone()))?;
    if ids.next().is_some() {
        return Err(GitError::MergeCommit(sha));
    }
    Ok(CommitPair {
        repo_path: repo_path.to_path_buf(),
        fix_revision: sha,
        parent_revision: parent.to_string(),
    })
}

/// Zero-context hunks of the fix commit, in file then line order.
/// Binary and non-UTF-8 files contribute nothing.
pub fn diff_hunks(pair: &CommitPair) -> Result<Vec<DiffHunk>, GitError> {
    Ok(file_diffs(pair)?
        .into_iter()
        .flat_map(|f| f.hunks)
        .collect())
}

pub fn file_diffs(pair: &CommitPair) -> Result<Vec<udiff::FileDiff>, GitError> {
    let repo = Repo::open(&pair.repo_path)?;
    let raw = repo.run(&[
        "diff",
        "--no-color",
        "--no-ext-diff",
        "--no-renames",
        "-U0",
        "--src-prefix=a/",
        "--dst-prefix=b/",
        &pair.parent_revision,
        &pair.fix_revision,
    ])?;
    let mut files = udiff::parse(&raw)?;
    files.sort_by(|a, b| a.path().cmp(b.path()));
    Ok(files)
}

/// Full contents, at one side of the pair, of the files the diff touches.
pub fn snapshot(pair: &CommitPair, side: Side) -> Result<SourceTree, GitError> {
    let repo = Repo::open(&pair.repo_path)?;
    let rev = match side {
        Side::Before => &pair.parent_revision,
        Side::After => &pair.fix_revision,
    };
    repo.rev_parse(rev)?;
    let raw = repo.run(&[
        "diff",
        "--no-renames",
        "--name-status",
        "-z",
        &pair.parent_revision,
        &pair.fix_revision,
    ])?;
    let mut fields = raw.split(|&b| b == 0).filter(|f| !f.is_empty());
    let mut tree = SourceTree::new();
    while let (Some(status), Some(path)) = (fields.next(), fields.next()) {
        let present = !matches!((status.first(), side), (Some(b'A'), Side::Before) | (Some(b'D'), Side::After));
        let Ok(path) = String::from_utf8(path.to_vec()) else {
            continue;
        };
        if present {
            if let Some(text) = text_content(repo.show_file(rev, &path)?) {
                tree.insert(path, text);
            }
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::GitFixture;

    #[test]
    fn resolve_and_diff() {
        let fx = GitFixture::new();
        let root = fx.commit("init", &[("a.txt", "one\ntwo\nthree\n")]);
        let fix = fx.commit("fix", &[("a.txt", "one\n2\nthree\n"), ("b.txt", "new\n")]);
        let pair = resolve_commit(fx.path(), &fix).unwrap();
        assert_eq!(pair.parent_revision, root);
        let hunks = diff_hunks(&pair).unwrap();
        assert_eq!(hunks.len(), 2);
        assert_eq!(hunks[0].file(), "a.txt");
        assert_eq!(hunks[0].before_text, "two\n");
        assert_eq!(hunks[1].location.before_span, None);

        let before = snapshot(&pair, Side::Before).unwrap();
        assert_eq!(before.paths().collect::<Vec<_>>(), vec!["a.txt"]);
        let after = snapshot(&pair, Side::After).unwrap();
        assert_eq!(after.get("b.txt"), Some("new\n"));

        assert!(matches!(resolve_commit(fx.path(), &root), Err(GitError::RootCommit(_))));
        assert!(matches!(
            resolve_commit(fx.path(), "0123456789abcdef0123456789abcdef01234567"),
            Err(GitError::RevisionNotFound(_))
        ));
        let info = Repo::open(fx.path()).unwrap().commit_info(&fix).unwrap();
        assert_eq!(info.message, "fix");
        assert_eq!(info.parents, vec![root]);
    }

    #[test]
    fn missing_repo_is_unavailable() {
        let err = resolve_commit(Path::new("/nonexistent/repo"), "HEAD").unwrap_err();
        assert!(matches!(err, GitError::RepoUnavailable { .. }));
    }

    #[test]
    fn read_tree_skips_binary() {
        let fx = GitFixture::new();
        fx.write_bytes("bin.dat", b"\x00\x01");
        let rev = fx.commit("c", &[("src/x.ml", "int f() {\n    return 1;\n}\n")]);
        let tree = Repo::open(fx.path()).unwrap().read_tree(&rev).unwrap();
        assert_eq!(tree.paths().collect::<Vec<_>>(), vec!["src/x.ml"]);
    }
}

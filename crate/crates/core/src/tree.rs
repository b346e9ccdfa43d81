use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};
use walkdir::WalkDir;

/// In-memory file tree keyed by `/`-separated relative path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceTree {
    files: BTreeMap<String, String>,
}

impl SourceTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_files(files: BTreeMap<String, String>) -> Self {
        SourceTree { files }
    }

    /// Reads every UTF-8 file under `root` for which `keep` returns true.
    /// Files that are not valid UTF-8 are skipped.
    pub fn read_dir(root: &Path, keep: impl Fn(&str) -> bool) -> io::Result<Self> {
        let mut files = BTreeMap::new();
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(io::Error::other)?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(root)
                .expect("walkdir yields paths under root");
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if !keep(&rel) {
                continue;
            }
            if let Ok(text) = String::from_utf8(fs::read(entry.path())?) {
                files.insert(rel, text);
            }
        }
        Ok(SourceTree { files })
    }

    pub fn write_to(&self, root: &Path) -> io::Result<()> {
        for (path, text) in &self.files {
            let dest = root.join(path);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(dest, text)?;
        }
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.files.get(path).map(String::as_str)
    }

    pub fn insert(&mut self, path: impl Into<String>, text: impl Into<String>) {
        self.files.insert(path.into(), text.into());
    }

    pub fn remove(&mut self, path: &str) -> Option<String> {
        self.files.remove(path)
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Content hash used as a synthetic revision id (40 hex chars).
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (path, text) in &self.files {
            h.update(path.as_bytes());
            h.update([0]);
            h.update(text.as_bytes());
            h.update([0]);
        }
        let mut hex = hex::encode(h.finalize());
        hex.truncate(40);
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_tracks_content() {
        let mut a = SourceTree::new();
        a.insert("x.ml", "int f() {\n}\n");
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 40);
        b.insert("x.ml", "int f() {\n }\n");
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = SourceTree::new();
        t.insert("a/b.ml", "1\n");
        t.insert("c.txt", "2");
        t.write_to(dir.path()).unwrap();
        assert_eq!(SourceTree::read_dir(dir.path(), |_| true).unwrap(), t);
        let only_ml = SourceTree::read_dir(dir.path(), |p| p.ends_with(".ml")).unwrap();
        assert_eq!(only_ml.paths().collect::<Vec<_>>(), vec!["a/b.ml"]);
    }
}

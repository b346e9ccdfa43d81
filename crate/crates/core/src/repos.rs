//! Locating local checkouts for the projects that records point at.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use tracing::info;

use crate::git::GitError;
use crate::model::ProjectRef;

pub trait RepoProvider: Send + Sync {
    /// Path of a checkout of `project`, or `RepoUnavailable`.
    fn locate(&self, project: &ProjectRef) -> Result<PathBuf, GitError>;
}

/// Checkouts laid out as `<root>/<host>/<owner>/<name>`.
#[derive(Debug, Clone)]
pub struct MirrorDir {
    root: PathBuf,
}

impl MirrorDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        MirrorDir { root: root.into() }
    }

    pub fn path_for(&self, p: &ProjectRef) -> PathBuf {
        self.root.join(&p.host).join(&p.owner).join(&p.name)
    }
}

impl RepoProvider for MirrorDir {
    fn locate(&self, project: &ProjectRef) -> Result<PathBuf, GitError> {
        let path = self.path_for(project);
        if path.is_dir() {
            Ok(path)
        } else {
            Err(GitError::RepoUnavailable {
                path,
                reason: "not present in mirror".into(),
            })
        }
    }
}

/// Clones missing repositories into a mirror with a user-supplied shell
/// command. `{url}` and `{dest}` in the template are substituted.
#[derive(Debug, Clone)]
pub struct CloneCommand {
    mirror: MirrorDir,
    template: String,
}

impl CloneCommand {
    pub fn new(mirror_root: impl Into<PathBuf>, template: impl Into<String>) -> Self {
        CloneCommand {
            mirror: MirrorDir::new(mirror_root),
            template: template.into(),
        }
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

impl RepoProvider for CloneCommand {
    fn locate(&self, project: &ProjectRef) -> Result<PathBuf, GitError> {
        let dest = self.mirror.path_for(project);
        if dest.is_dir() {
            return Ok(dest);
        }
        let url = format!("https://{}/{}/{}.git", project.host, project.owner, project.name);
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        let cmd = self
            .template
            .replace("{url}", &shell_quote(&url))
            .replace("{dest}", &shell_quote(&dest.to_string_lossy()));
        info!(%url, "cloning");
        let out = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .stdin(Stdio::null())
            .output()?;
        if !out.status.success() || !dest.is_dir() {
            let _ = fs::remove_dir_all(&dest);
            return Err(GitError::RepoUnavailable {
                path: dest,
                reason: format!(
                    "clone command failed: {}",
                    String::from_utf8_lossy(&out.stderr).trim()
                ),
            });
        }
        Ok(dest)
    }
}

/// Language tags per `owner/name`, read from `owner/name = Language` lines.
#[derive(Debug, Clone, Default)]
pub struct LanguageMap {
    tags: BTreeMap<String, String>,
    default: String,
}

impl LanguageMap {
    pub const UNKNOWN: &'static str = "unknown";

    pub fn new() -> Self {
        LanguageMap {
            tags: BTreeMap::new(),
            default: Self::UNKNOWN.to_string(),
        }
    }

    pub fn parse(text: &str) -> Self {
        let mut map = Self::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                let (k, v) = (k.trim(), v.trim());
                if k == "*" {
                    map.default = v.to_string();
                } else {
                    map.tags.insert(k.to_string(), v.to_string());
                }
            }
        }
        map
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn insert(&mut self, owner_name: &str, language: &str) {
        self.tags.insert(owner_name.to_string(), language.to_string());
    }

    pub fn language(&self, owner: &str, name: &str) -> &str {
        self.tags
            .get(&format!("{owner}/{name}"))
            .unwrap_or(&self.default)
    }
}

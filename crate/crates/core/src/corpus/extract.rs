//! Commit extraction through the `git` command-line tool.
//!
//! Live extraction runs `git log -p` with [`GIT_LOG_FORMAT`] and parses its
//! output. An offline dump is the saved output of the same command, so
//! importing a dump and extracting the repository it came from give the same
//! commits:
//!
//! ```text
//! git -C <repo> log --no-color --no-ext-diff -p '--format=format:%x1e%H%x00%B%x00' > repo.dump
//! ```

use std::path::Path;
use std::process::Command;

use log::warn;

use super::Commit;
use crate::error::{Error, Result};

/// Record separator (0x1e) before each commit, NUL after the hash and after
/// the message body.
pub const GIT_LOG_FORMAT: &str = "--format=format:%x1e%H%x00%B%x00";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    /// Reverse-chronological, as `git log` reports them.
    pub commits: Vec<Commit>,
    /// Revisions that could not be parsed.
    pub skipped: usize,
    /// Ids whose diff touched only binary files; their patch is empty.
    pub binary_only: Vec<String>,
}

/// Repository identifier derived from a path or URL: the last path
/// component without a trailing `.git`.
pub fn repo_name(location: &str) -> String {
    let trimmed = location.trim_end_matches(['/', '\\']);
    let last = trimmed.rsplit(['/', '\\', ':']).next().unwrap_or(trimmed);
    let name = last.strip_suffix(".git").unwrap_or(last);
    if name.is_empty() {
        location.to_string()
    } else {
        name.to_string()
    }
}

fn is_remote(location: &str) -> bool {
    location.contains("://") || location.starts_with("git@")
}

fn git(dir: &Path) -> Command {
    let mut cmd = Command::new("git");
    cmd.arg("-C").arg(dir).args(["-c", "core.quotepath=off"]);
    cmd
}

/// Extracts every commit in `range` (default: all of HEAD's history).
///
/// Remote URLs are cloned bare into a temporary directory first. An empty
/// repository yields an empty extraction.
pub fn extract_commits(repo_location: &str, range: Option<&str>) -> Result<Extraction> {
    let ingest_err = |reason: String| Error::Ingest {
        location: repo_location.to_string(),
        reason,
    };

    let _clone_dir;
    let dir = if is_remote(repo_location) {
        let tmp = tempfile::tempdir().map_err(|e| ingest_err(e.to_string()))?;
        let status = Command::new("git")
            .args(["clone", "--quiet", "--bare", repo_location])
            .arg(tmp.path())
            .status()
            .map_err(|e| ingest_err(format!("cannot run git: {e}")))?;
        if !status.success() {
            return Err(ingest_err(format!("git clone exited with {status}")));
        }
        let path = tmp.path().to_path_buf();
        _clone_dir = tmp;
        path
    } else {
        Path::new(repo_location).to_path_buf()
    };

    if !dir.is_dir() {
        return Err(ingest_err("not a directory".into()));
    }
    let probe = git(&dir)
        .args(["rev-parse", "--git-dir"])
        .output()
        .map_err(|e| ingest_err(format!("cannot run git: {e}")))?;
    if !probe.status.success() {
        return Err(ingest_err(String::from_utf8_lossy(&probe.stderr).trim().to_string()));
    }

    if range.is_none() {
        let head = git(&dir)
            .args(["rev-parse", "--verify", "--quiet", "HEAD"])
            .output()
            .map_err(|e| ingest_err(e.to_string()))?;
        if !head.status.success() {
            // No commits yet.
            return Ok(Extraction::default());
        }
    }

    let mut cmd = git(&dir);
    cmd.args(["log", "--no-color", "--no-ext-diff", "-p", GIT_LOG_FORMAT]);
    if let Some(range) = range {
        cmd.arg(range);
    }
    let output = cmd.output().map_err(|e| ingest_err(e.to_string()))?;
    if !output.status.success() {
        return Err(ingest_err(String::from_utf8_lossy(&output.stderr).trim().to_string()));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    Ok(parse_log(&text, &repo_name(repo_location)))
}

/// Reads a saved `git log` dump (see the module docs).
pub fn import_dump(path: impl AsRef<Path>, repo: &str) -> Result<Extraction> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if repo.is_empty() {
        return Err(Error::Config("repository name for a dump must be non-empty".into()));
    }
    Ok(parse_log(&String::from_utf8_lossy(&bytes), repo))
}

fn is_binary_only(patch: &str) -> bool {
    let mut binary = false;
    for line in patch.lines() {
        if line.starts_with("@@") {
            return false;
        }
        if (line.starts_with("Binary files ") && line.ends_with(" differ")) || line == "GIT binary patch" {
            binary = true;
        }
    }
    binary
}

/// Parses `git log` output produced with [`GIT_LOG_FORMAT`].
pub fn parse_log(text: &str, repo: &str) -> Extraction {
    let mut extraction = Extraction::default();
    for chunk in text.split('\x1e').skip(1) {
        let mut parts = chunk.splitn(3, '\0');
        let (Some(hash), Some(message), Some(rest)) = (parts.next(), parts.next(), parts.next()) else {
            warn!("skipping unparseable revision record ({} bytes)", chunk.len());
            extraction.skipped += 1;
            continue;
        };
        let hash = hash.trim();
        if hash.is_empty() || !hash.chars().all(|c| c.is_ascii_hexdigit()) {
            warn!("skipping revision with malformed id {hash:?}");
            extraction.skipped += 1;
            continue;
        }

        let message = message.trim_end_matches('\n');
        let body = rest.trim_matches('\n');
        let mut patch = if body.is_empty() {
            String::new()
        } else {
            format!("{body}\n")
        };
        if is_binary_only(&patch) {
            extraction.binary_only.push(hash.to_string());
            patch.clear();
        }
        extraction.commits.push(Commit {
            id: hash.to_string(),
            repo: repo.to_string(),
            message: message.to_string(),
            patch,
        });
    }
    extraction
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repo_names() {
        assert_eq!(repo_name("/src/jackson-databind"), "jackson-databind");
        assert_eq!(repo_name("/src/jackson-databind/"), "jackson-databind");
        assert_eq!(repo_name("https://github.com/apache/struts.git"), "struts");
        assert_eq!(repo_name("git@github.com:apache/struts.git"), "struts");
    }

    #[test]
    fn parses_records_and_skips_garbage() {
        let text = "\x1eabc123\0Fix overflow\n\nlong body\n\0\ndiff --git a/f b/f\n@@ -1 +1 @@\n-a\n+b\n\n\
                    \x1enothex!\0msg\0\n\
                    \x1edef456\0Add logo\n\0\ndiff --git a/l.png b/l.png\nBinary files a/l.png and b/l.png differ\n\n\
                    \x1etruncated";
        let ex = parse_log(text, "r");
        assert_eq!(ex.commits.len(), 2);
        assert_eq!(ex.skipped, 2);
        assert_eq!(ex.commits[0].id, "abc123");
        assert_eq!(ex.commits[0].message, "Fix overflow\n\nlong body");
        assert_eq!(ex.commits[0].patch, "diff --git a/f b/f\n@@ -1 +1 @@\n-a\n+b\n");
        assert_eq!(ex.commits[1].patch, "");
        assert_eq!(ex.binary_only, vec!["def456".to_string()]);
    }

    #[test]
    fn empty_log_is_empty() {
        assert_eq!(parse_log("", "r"), Extraction::default());
    }
}

//! Extraction from real git repositories built in temporary directories.

use std::fs;
use std::path::Path;
use std::process::Command;

use commitsift::corpus::{extract_commits, import_dump, GIT_LOG_FORMAT};
use commitsift::Error;

fn git(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args([
            "-c",
            "user.name=Fixture",
            "-c",
            "user.email=fixture@example.org",
            "-c",
            "commit.gpgsign=false",
        ])
        .args(args)
        .env("GIT_AUTHOR_DATE", "2020-01-01T00:00:00Z")
        .env("GIT_COMMITTER_DATE", "2020-01-01T00:00:00Z")
        .output()
        .expect("git runs");
    assert!(
        out.status.success(),
        "git {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn commit_all(dir: &Path, message: &str) {
    git(dir, &["add", "-A"]);
    git(dir, &["commit", "-q", "-m", message]);
}

/// Five commits, the fourth touching only a binary file.
fn fixture_repo(dir: &Path) {
    git(dir, &["init", "-q"]);
    fs::write(dir.join("auth.c"), "int check(int len) {\n    return len;\n}\n").unwrap();
    commit_all(dir, "Add length check");
    fs::write(
        dir.join("auth.c"),
        "int check(int len) {\n    if (len > MAX) return -1;\n    return len;\n}\n",
    )
    .unwrap();
    commit_all(dir, "Fix buffer overflow in check()\n\nReject lengths above MAX.");
    fs::write(dir.join("README"), "Überprüfung\n").unwrap();
    commit_all(dir, "Docs: describe validation");
    fs::write(dir.join("logo.png"), [0x89u8, b'P', b'N', b'G', 0, 0, 1, 2, 0, 255]).unwrap();
    commit_all(dir, "Add logo");
    fs::remove_file(dir.join("README")).unwrap();
    commit_all(dir, "Remove readme");
}

#[test]
fn live_extraction_reports_every_revision() {
    let tmp = tempfile::tempdir().unwrap();
    fixture_repo(tmp.path());
    let ex = extract_commits(tmp.path().to_str().unwrap(), None).unwrap();
    assert_eq!(ex.commits.len(), 5);
    assert_eq!(ex.skipped, 0);

    let messages: Vec<&str> = ex.commits.iter().map(|c| c.message.as_str()).collect();
    assert_eq!(
        messages,
        [
            "Remove readme",
            "Add logo",
            "Docs: describe validation",
            "Fix buffer overflow in check()\n\nReject lengths above MAX.",
            "Add length check",
        ]
    );
    let mut ids: Vec<&str> = ex.commits.iter().map(|c| c.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 5);
    assert!(ex
        .commits
        .iter()
        .all(|c| c.repo == tmp.path().file_name().unwrap().to_str().unwrap()));

    let fix = &ex.commits[3];
    assert!(fix.patch.starts_with("diff --git a/auth.c b/auth.c\n"));
    assert!(fix.patch.contains("\n+    if (len > MAX) return -1;\n"));
    assert!(ex.commits[2].patch.contains("+Überprüfung\n"));

    let logo = &ex.commits[1];
    assert_eq!(logo.patch, "");
    assert_eq!(ex.binary_only, std::slice::from_ref(&logo.id));
}

#[test]
fn revision_range_limits_extraction() {
    let tmp = tempfile::tempdir().unwrap();
    fixture_repo(tmp.path());
    let ex = extract_commits(tmp.path().to_str().unwrap(), Some("HEAD~2..HEAD")).unwrap();
    assert_eq!(ex.commits.len(), 2);
}

#[test]
fn dump_import_equals_live_extraction() {
    let tmp = tempfile::tempdir().unwrap();
    let repo = tmp.path().join("project");
    fs::create_dir(&repo).unwrap();
    fixture_repo(&repo);
    let dump = git(&repo, &["log", "--no-color", "--no-ext-diff", "-p", GIT_LOG_FORMAT]);
    let dump_path = tmp.path().join("project.dump");
    fs::write(&dump_path, dump).unwrap();

    let live = extract_commits(repo.to_str().unwrap(), None).unwrap();
    let imported = import_dump(&dump_path, "project").unwrap();
    assert_eq!(live, imported);
}

#[test]
fn empty_repository_yields_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    git(tmp.path(), &["init", "-q"]);
    let ex = extract_commits(tmp.path().to_str().unwrap(), None).unwrap();
    assert!(ex.commits.is_empty());
    assert_eq!(ex.skipped, 0);
}

#[test]
fn unreadable_locations_are_ingest_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    assert!(matches!(
        extract_commits(missing.to_str().unwrap(), None),
        Err(Error::Ingest { .. })
    ));
    // A directory that is not a repository.
    assert!(matches!(
        extract_commits(tmp.path().to_str().unwrap(), None),
        Err(Error::Ingest { .. })
    ));
}

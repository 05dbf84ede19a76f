//! Line-delimited JSON dataset files.
//!
//! Line 1 is a header `{"format_version":1,"meta":{...}}`; every further line
//! is one record `{id, repo, message, patch, label, provenance}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Commit, Dataset, Label, LabeledCommit, Provenance};
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u64,
    meta: Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    repo: String,
    message: String,
    patch: String,
    label: Label,
    provenance: Provenance,
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    let header = Header {
        format_version: DATASET_FORMAT_VERSION,
        meta: ds.meta.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for item in &ds.items {
        let record = Record {
            id: item.commit.id.clone(),
            repo: item.commit.repo.clone(),
            message: item.commit.message.clone(),
            patch: item.commit.patch.clone(),
            label: item.label,
            provenance: item.provenance,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(ds, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Parses a dataset; `source_name` only labels error messages.
pub fn read_dataset<R: BufRead>(input: R, source_name: &str) -> Result<Dataset> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        reason,
    };

    let mut lines = input.lines().enumerate();
    let header: Header = match lines.next() {
        None => return Err(parse_err(1, "missing header line".into())),
        Some((_, line)) => {
            let line = line.map_err(|e| parse_err(1, e.to_string()))?;
            // Peek at the version first so an old/new header yields a version
            // error rather than a schema error.
            let raw: Value = serde_json::from_str(&line).map_err(|e| parse_err(1, e.to_string()))?;
            match raw.get("format_version").and_then(Value::as_u64) {
                Some(DATASET_FORMAT_VERSION) => {}
                Some(found) => {
                    return Err(Error::Version {
                        found,
                        expected: DATASET_FORMAT_VERSION,
                    })
                }
                None => return Err(parse_err(1, "header lacks format_version".into())),
            }
            serde_json::from_value(raw).map_err(|e| parse_err(1, e.to_string()))?
        }
    };

    let mut items = Vec::new();
    for (index, line) in lines {
        let lineno = index + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let commit = Commit {
            id: record.id,
            repo: record.repo,
            message: record.message,
            patch: record.patch,
        };
        commit.validate().map_err(|e| parse_err(lineno, e.to_string()))?;
        items.push(LabeledCommit::new(commit, record.label, record.provenance));
    }
    Dataset::new(items, header.meta).map_err(|e| parse_err(0, e.to_string()))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Dataset {
        let mut meta = Map::new();
        meta.insert("source".into(), json!("unit"));
        Dataset::new(
            vec![
                LabeledCommit::new(
                    Commit::new("a1", "r", "Fix XSS", "@@ -1 +1 @@\n-x\n+y\n").unwrap(),
                    Label::Positive,
                    Provenance::Curated,
                ),
                LabeledCommit::new(
                    Commit::new("b2", "r", "Ünïcode · 修复 \u{1F512}", "").unwrap(),
                    Label::Negative,
                    Provenance::Sampled,
                ),
                LabeledCommit::new(
                    Commit::new("c3", "s", "", "+tab\there\r\n").unwrap(),
                    Label::Negative,
                    Provenance::Imported,
                ),
            ],
            meta,
        )
        .unwrap()
    }

    fn to_bytes(ds: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset(ds, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ds = sample();
        let bytes = to_bytes(&ds);
        let back = read_dataset(&bytes[..], "mem").unwrap();
        assert_eq!(back, ds);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn header_line_shape() {
        let bytes = to_bytes(&sample());
        let text = String::from_utf8(bytes).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, r#"{"format_version":1,"meta":{"source":"unit"}}"#);
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn truncated_last_line_names_line() {
        let bytes = to_bytes(&sample());
        let cut = &bytes[..bytes.len() - 10];
        let err = read_dataset(cut, "mem").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let text = "{\"format_version\":2,\"meta\":{}}\n";
        assert!(matches!(
            read_dataset(text.as_bytes(), "mem"),
            Err(Error::Version { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn unknown_label_rejected() {
        let text = "{\"format_version\":1,\"meta\":{}}\n{\"id\":\"a\",\"repo\":\"r\",\"message\":\"\",\"patch\":\"\",\"label\":\"maybe\",\"provenance\":\"curated\"}\n";
        assert!(matches!(
            read_dataset(text.as_bytes(), "mem"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}

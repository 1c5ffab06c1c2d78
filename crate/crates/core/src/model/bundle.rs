//! Line-delimited `.glds` bundle encoding.
//!
//! Line 1 is the manifest object; every following line is
//! `{"table":<name>,"record":{...}}`, tables and records in canonical order.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::records::*;
use super::validate::validate_dataset;
use super::{CohortDataset, DatasetManifest, ModelError};

pub const SCHEMA_VERSION: &str = "1";
pub const BUNDLE_EXTENSION: &str = "glds";

#[derive(Serialize)]
#[serde(tag = "table", content = "record", rename_all = "snake_case")]
enum TaggedRef<'a> {
    Actors(&'a ActorRecord),
    AnatomyQi(&'a AnatomyQiRecord),
    AnatomySensitive(&'a AnatomySensitiveRecord),
    Commits(&'a CommitRecord),
    Events(&'a EventRecord),
    Marks(&'a MarkRecord),
    Teams(&'a TeamRecord),
}

#[derive(Deserialize)]
#[serde(tag = "table", content = "record", rename_all = "snake_case", deny_unknown_fields)]
enum Tagged {
    Actors(ActorRecord),
    AnatomyQi(AnatomyQiRecord),
    AnatomySensitive(AnatomySensitiveRecord),
    Commits(CommitRecord),
    Events(EventRecord),
    Marks(MarkRecord),
    Teams(TeamRecord),
}

/// Record lines in canonical order, assuming the tables are already sorted.
fn write_records(ds: &CohortDataset, out: &mut Vec<u8>) {
    fn push<T: Serialize>(out: &mut Vec<u8>, line: &T) {
        serde_json::to_writer(&mut *out, line).expect("records serialize");
        out.push(b'\n');
    }
    ds.actors.iter().for_each(|r| push(out, &TaggedRef::Actors(r)));
    ds.anatomy_qi.iter().for_each(|r| push(out, &TaggedRef::AnatomyQi(r)));
    ds.anatomy_sensitive.iter().for_each(|r| push(out, &TaggedRef::AnatomySensitive(r)));
    ds.commits.iter().for_each(|r| push(out, &TaggedRef::Commits(r)));
    ds.events.iter().for_each(|r| push(out, &TaggedRef::Events(r)));
    ds.marks.iter().for_each(|r| push(out, &TaggedRef::Marks(r)));
    ds.teams.iter().for_each(|r| push(out, &TaggedRef::Teams(r)));
}

fn write_manifest(manifest: &DatasetManifest, out: &mut Vec<u8>) {
    serde_json::to_writer(&mut *out, manifest).expect("manifest serializes");
    out.push(b'\n');
}

/// SHA-256 over the canonical serialization with `content_hash` blanked.
pub fn content_hash(ds: &CohortDataset) -> String {
    let mut sorted;
    let ds = if is_sorted(ds) {
        ds
    } else {
        sorted = ds.clone();
        sorted.sort_tables();
        &sorted
    };
    let mut manifest = ds.manifest.clone();
    manifest.content_hash.clear();
    let mut bytes = Vec::new();
    write_manifest(&manifest, &mut bytes);
    write_records(ds, &mut bytes);
    hex::encode(Sha256::digest(&bytes))
}

fn is_sorted(ds: &CohortDataset) -> bool {
    fn sorted<R: Record>(rs: &[R]) -> bool {
        rs.windows(2).all(|w| w[0].primary_id() <= w[1].primary_id())
    }
    sorted(&ds.actors)
        && sorted(&ds.commits)
        && sorted(&ds.events)
        && sorted(&ds.teams)
        && sorted(&ds.marks)
        && sorted(&ds.anatomy_qi)
        && sorted(&ds.anatomy_sensitive)
}

/// Encode a valid dataset as canonical bundle bytes.
pub fn serialize(ds: &CohortDataset) -> Result<Vec<u8>, ModelError> {
    let violations = validate_dataset(ds);
    if !violations.is_empty() {
        return Err(ModelError::Invalid(violations));
    }
    let mut out = Vec::new();
    write_manifest(&ds.manifest, &mut out);
    if is_sorted(ds) {
        write_records(ds, &mut out);
    } else {
        let mut sorted = ds.clone();
        sorted.sort_tables();
        write_records(&sorted, &mut out);
    }
    Ok(out)
}

pub fn deserialize(bytes: &[u8]) -> Result<CohortDataset, ModelError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ModelError::Parse {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
        message: "invalid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (_, first) = lines.next().ok_or(ModelError::Parse {
        line: 1,
        message: "missing manifest line".into(),
    })?;
    let raw: serde_json::Value = serde_json::from_str(first).map_err(|e| parse_err(0, e))?;
    match raw.get("schema_version").and_then(|v| v.as_str()) {
        Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(ModelError::SchemaVersion(other.to_string())),
        None => {
            return Err(ModelError::Parse {
                line: 1,
                message: "manifest lacks schema_version".into(),
            })
        }
    }
    let manifest: DatasetManifest = serde_json::from_value(raw).map_err(|e| parse_err(0, e))?;

    let mut ds = CohortDataset::empty(manifest.stage);
    ds.manifest = manifest;
    for (idx, line) in lines {
        let tagged: Tagged = serde_json::from_str(line).map_err(|e| parse_err(idx, e))?;
        match tagged {
            Tagged::Actors(r) => ds.actors.push(r),
            Tagged::AnatomyQi(r) => ds.anatomy_qi.push(r),
            Tagged::AnatomySensitive(r) => ds.anatomy_sensitive.push(r),
            Tagged::Commits(r) => ds.commits.push(r),
            Tagged::Events(r) => ds.events.push(r),
            Tagged::Marks(r) => ds.marks.push(r),
            Tagged::Teams(r) => ds.teams.push(r),
        }
    }
    ds.sort_tables();
    Ok(ds)
}

fn parse_err(idx: usize, e: serde_json::Error) -> ModelError {
    ModelError::Parse { line: idx + 1, message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Instant, Stage};

    fn tiny() -> CohortDataset {
        let mut ds = CohortDataset::empty(Stage::Raw);
        ds.actors.push(ActorRecord {
            actor_id: "a1".into(),
            display_name: "Ann".into(),
            email: String::new(),
            username: String::new(),
            source_system: SourceSystem::Git,
        });
        ds.commits.push(CommitRecord {
            sha: "a".repeat(40),
            repo_id: "r".into(),
            author_ref: "a1".into(),
            committer_ref: "a1".into(),
            authored_at: Instant::Seconds(10),
            message: "init".into(),
            parent_shas: vec![],
            on_default_first_parent: true,
            insertions: None,
            deletions: None,
        });
        ds.seal()
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = CohortDataset::empty(Stage::Raw).seal();
        let bytes = serialize(&ds).unwrap();
        assert_eq!(deserialize(&bytes).unwrap(), ds);
    }

    #[test]
    fn record_lines_are_table_tagged() {
        let bytes = serialize(&tiny()).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("\"schema_version\":\"1\""));
        assert!(lines[1].starts_with("{\"table\":\"actors\",\"record\":{"));
        assert!(lines[2].starts_with("{\"table\":\"commits\",\"record\":{"));
    }

    #[test]
    fn unknown_schema_version_rejected() {
        let bytes = serialize(&tiny()).unwrap();
        let text = String::from_utf8(bytes).unwrap().replace("\"schema_version\":\"1\"", "\"schema_version\":\"2\"");
        assert!(matches!(deserialize(text.as_bytes()), Err(ModelError::SchemaVersion(v)) if v == "2"));
    }

    #[test]
    fn malformed_line_reports_position() {
        let mut bytes = serialize(&tiny()).unwrap();
        bytes.extend_from_slice(b"{\"table\":\"actors\",\"record\":\n");
        match deserialize(&bytes) {
            Err(ModelError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(deserialize(b""), Err(ModelError::Parse { line: 1, .. })));
    }

    #[test]
    fn hash_changes_with_message() {
        let ds = tiny();
        let mut other = ds.clone();
        other.commits[0].message.push('!');
        assert_ne!(content_hash(&ds), content_hash(&other));
        assert_eq!(content_hash(&ds), ds.manifest.content_hash);
    }
}

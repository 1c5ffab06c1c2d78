use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::model::{CohortDataset, Record, Table};

use super::AnonymizeError;

/// A `table.field` reference such as `actors.email` or `events.payload.source_branch`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldPath {
    pub table: Table,
    pub field: String,
}

const ACTOR_FIELDS: &[&str] = &["actor_id", "display_name", "email", "username", "source_system"];
const COMMIT_FIELDS: &[&str] = &[
    "sha",
    "repo_id",
    "author_ref",
    "committer_ref",
    "authored_at",
    "message",
    "parent_shas",
    "on_default_first_parent",
    "insertions",
    "deletions",
];
const EVENT_FIELDS: &[&str] = &["event_id", "kind", "actor_ref", "project_id", "occurred_at"];
const TEAM_FIELDS: &[&str] = &["team_id", "project_id", "member_refs"];
const MARK_FIELDS: &[&str] = &["subject_ref", "assessment_id", "value"];

impl FieldPath {
    pub fn new(table: Table, field: &str) -> Self {
        Self { table, field: field.to_string() }
    }

    /// The payload key for `events.payload.<key>` paths.
    pub fn payload_key(&self) -> Option<&str> {
        if self.table == Table::Events {
            self.field.strip_prefix("payload.")
        } else {
            None
        }
    }

    pub fn is(&self, table: Table, field: &str) -> bool {
        self.table == table && self.field == field
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.field)
    }
}

impl FromStr for FieldPath {
    type Err = AnonymizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || AnonymizeError::Config(format!("unknown field {s:?}"));
        let (table, field) = s.split_once('.').ok_or_else(unknown)?;
        let table = Table::from_name(table).ok_or_else(unknown)?;
        let known = match table {
            Table::Actors => ACTOR_FIELDS.contains(&field),
            Table::Commits => COMMIT_FIELDS.contains(&field),
            Table::Events => {
                EVENT_FIELDS.contains(&field) || field.strip_prefix("payload.").is_some_and(|k| !k.is_empty())
            }
            Table::Teams => TEAM_FIELDS.contains(&field),
            Table::Marks => MARK_FIELDS.contains(&field),
            Table::AnatomyQi | Table::AnatomySensitive => false,
        };
        if known {
            Ok(FieldPath::new(table, field))
        } else {
            Err(unknown())
        }
    }
}

pub fn parse_fields(paths: &[String]) -> Result<Vec<FieldPath>, AnonymizeError> {
    paths.iter().map(|p| p.parse()).collect()
}

fn render(value: &Value) -> Option<String> {
    match value {
        Value::Null => None,
        Value::String(s) if s.is_empty() => None,
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => Some(items.iter().filter_map(render).collect::<Vec<_>>().join(",")),
        other => Some(other.to_string()),
    }
}

fn lookup<R: Serialize>(record: &R, field: &str) -> Option<String> {
    let value = serde_json::to_value(record).expect("records serialize");
    let found = match field.strip_prefix("payload.") {
        Some(key) => value.get("payload").and_then(|p| p.get(key)),
        None => value.get(field),
    };
    found.and_then(render)
}

fn column_of<R: Record>(records: &[R], field: &str) -> Vec<(String, Option<String>)> {
    records.iter().map(|r| (r.primary_id(), lookup(r, field))).collect()
}

/// `(record id, rendered value)` for every record of the field's table.
/// Absent or empty values read as `None`.
pub fn read_column(ds: &CohortDataset, path: &FieldPath) -> Vec<(String, Option<String>)> {
    match path.table {
        Table::Actors => column_of(&ds.actors, &path.field),
        Table::Commits => column_of(&ds.commits, &path.field),
        Table::Events => column_of(&ds.events, &path.field),
        Table::Teams => column_of(&ds.teams, &path.field),
        Table::Marks => column_of(&ds.marks, &path.field),
        Table::AnatomyQi => column_of(&ds.anatomy_qi, &path.field),
        Table::AnatomySensitive => column_of(&ds.anatomy_sensitive, &path.field),
    }
}

/// Rendered values of several fields of one table, one tuple per record.
pub fn read_tuples(ds: &CohortDataset, table: Table, fields: &[FieldPath]) -> Vec<(String, Vec<Option<String>>)> {
    let n = ds.table_len(table);
    let columns: Vec<_> = fields.iter().map(|f| read_column(ds, f)).collect();
    (0..n)
        .map(|i| {
            let id = match columns.first() {
                Some(c) => c[i].0.clone(),
                None => String::new(),
            };
            (id, columns.iter().map(|c| c[i].1.clone()).collect())
        })
        .collect()
}

/// The single table shared by `fields`, or a config error.
pub fn common_table(fields: &[FieldPath], what: &str) -> Result<Option<Table>, AnonymizeError> {
    let mut tables = fields.iter().map(|f| f.table);
    let Some(first) = tables.next() else {
        return Ok(None);
    };
    if tables.any(|t| t != first) {
        return Err(AnonymizeError::Config(format!("{what} fields must all belong to one table")));
    }
    Ok(Some(first))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_paths() {
        let p: FieldPath = "events.payload.source_branch".parse().unwrap();
        assert_eq!(p.payload_key(), Some("source_branch"));
        assert_eq!(p.to_string(), "events.payload.source_branch");
        assert!("marks.value".parse::<FieldPath>().is_ok());
        assert!("marks.colour".parse::<FieldPath>().is_err());
        assert!("students.email".parse::<FieldPath>().is_err());
        assert!("events.payload.".parse::<FieldPath>().is_err());
    }
}

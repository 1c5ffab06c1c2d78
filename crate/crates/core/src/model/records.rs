use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::values::{Instant, Measure};

/// The system an actor record was observed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSystem {
    Git,
    Gitlab,
    Jenkins,
    MarksFile,
}

impl SourceSystem {
    /// Lower ranks win when collapsing duplicate actors into one record.
    pub fn merge_priority(self) -> u8 {
        match self {
            SourceSystem::Gitlab => 0,
            SourceSystem::Git => 1,
            SourceSystem::Jenkins => 2,
            SourceSystem::MarksFile => 3,
        }
    }
}

/// A person as seen by one source system. Empty strings mean "absent" and are
/// omitted from serialized output, which is how suppression removes a field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorRecord {
    pub actor_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub display_name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub email: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub username: String,
    pub source_system: SourceSystem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub sha: String,
    pub repo_id: String,
    pub author_ref: String,
    pub committer_ref: String,
    pub authored_at: Instant,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
    pub parent_shas: Vec<String>,
    pub on_default_first_parent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insertions: Option<Measure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deletions: Option<Measure>,
}

impl CommitRecord {
    pub fn is_merge(&self) -> bool {
        self.parent_shas.len() > 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    IssueOpened,
    IssueClosed,
    MrOpened,
    MrMerged,
    MrClosed,
    PipelineRun,
    BuildResult,
    Comment,
}

impl EventKind {
    pub fn is_merge_request(self) -> bool {
        matches!(self, EventKind::MrOpened | EventKind::MrMerged | EventKind::MrClosed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::IssueOpened => "issue_opened",
            EventKind::IssueClosed => "issue_closed",
            EventKind::MrOpened => "mr_opened",
            EventKind::MrMerged => "mr_merged",
            EventKind::MrClosed => "mr_closed",
            EventKind::PipelineRun => "pipeline_run",
            EventKind::BuildResult => "build_result",
            EventKind::Comment => "comment",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const BUILD_STATUSES: [&str; 4] = ["success", "failure", "unstable", "aborted"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: String,
    pub kind: EventKind,
    pub actor_ref: String,
    pub project_id: String,
    pub occurred_at: Instant,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamRecord {
    pub team_id: String,
    pub project_id: String,
    pub member_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkRecord {
    pub subject_ref: String,
    pub assessment_id: String,
    pub value: Measure,
}

/// One row of an anatomised table's quasi-identifier half.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnatomyQiRecord {
    pub record_id: String,
    pub table: Table,
    pub group_id: String,
    pub qi: BTreeMap<String, String>,
}

/// The sensitive half of an anatomised group: each field's values, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnatomySensitiveRecord {
    pub group_id: String,
    pub table: Table,
    pub values: BTreeMap<String, Vec<String>>,
}

/// Record tables in canonical (lexicographic) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Actors,
    AnatomyQi,
    AnatomySensitive,
    Commits,
    Events,
    Marks,
    Teams,
}

impl Table {
    pub const ALL: [Table; 7] = [
        Table::Actors,
        Table::AnatomyQi,
        Table::AnatomySensitive,
        Table::Commits,
        Table::Events,
        Table::Marks,
        Table::Teams,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::Actors => "actors",
            Table::AnatomyQi => "anatomy_qi",
            Table::AnatomySensitive => "anatomy_sensitive",
            Table::Commits => "commits",
            Table::Events => "events",
            Table::Marks => "marks",
            Table::Teams => "teams",
        }
    }

    pub fn from_name(name: &str) -> Option<Table> {
        Table::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A row with a primary id unique within its table.
pub trait Record: Clone + Serialize {
    const TABLE: Table;

    fn primary_id(&self) -> String;
}

impl Record for ActorRecord {
    const TABLE: Table = Table::Actors;

    fn primary_id(&self) -> String {
        self.actor_id.clone()
    }
}

impl Record for CommitRecord {
    const TABLE: Table = Table::Commits;

    // the same commit can legitimately appear in several repositories
    // (template forks), so the repository is part of the key
    fn primary_id(&self) -> String {
        format!("{}@{}", self.repo_id, self.sha)
    }
}

impl Record for EventRecord {
    const TABLE: Table = Table::Events;

    fn primary_id(&self) -> String {
        self.event_id.clone()
    }
}

impl Record for TeamRecord {
    const TABLE: Table = Table::Teams;

    fn primary_id(&self) -> String {
        self.team_id.clone()
    }
}

impl Record for MarkRecord {
    const TABLE: Table = Table::Marks;

    fn primary_id(&self) -> String {
        format!("{}/{}", self.subject_ref, self.assessment_id)
    }
}

impl Record for AnatomyQiRecord {
    const TABLE: Table = Table::AnatomyQi;

    fn primary_id(&self) -> String {
        self.record_id.clone()
    }
}

impl Record for AnatomySensitiveRecord {
    const TABLE: Table = Table::AnatomySensitive;

    fn primary_id(&self) -> String {
        self.group_id.clone()
    }
}

/// Sort records by primary id, the canonical order.
pub fn sort_canonical<R: Record>(records: &mut [R]) {
    records.sort_by_cached_key(|r| r.primary_id());
}

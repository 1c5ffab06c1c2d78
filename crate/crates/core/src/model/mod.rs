//! Canonical cohort data model shared by every pipeline stage.
//!
//! A [`CohortDataset`] holds the record tables plus a [`DatasetManifest`].
//! Tables are kept in canonical order (sorted by primary id) and the manifest
//! carries record counts and a content hash; [`CohortDataset::seal`]
//! re-establishes both after any transformation.

mod bundle;
mod records;
mod validate;
pub mod values;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use bundle::{content_hash, deserialize, serialize, BUNDLE_EXTENSION, SCHEMA_VERSION};
pub use records::{
    sort_canonical, ActorRecord, AnatomyQiRecord, AnatomySensitiveRecord, CommitRecord,
    EventKind, EventRecord, MarkRecord, Record, SourceSystem, Table, TeamRecord, BUILD_STATUSES,
};
pub use validate::{validate_dataset, Violation};
pub use values::{Granularity, Instant, Measure};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unsupported schema version {0:?}")]
    SchemaVersion(String),
    #[error("malformed bundle at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset fails validation ({} violations, first: {})", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    Resolved,
    Anonymised,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Raw, Stage::Resolved, Stage::Anonymised];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Resolved => "resolved",
            Stage::Anonymised => "anonymised",
        }
    }

    /// Stages only move forward (staying put is allowed for idempotent reruns).
    pub fn may_become(self, next: Stage) -> bool {
        next >= self
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: String,
    /// UTC seconds. Derived from the data (latest activity) so reruns are reproducible.
    pub created_at: i64,
    pub stage: Stage,
    pub source_descriptors: Vec<String>,
    pub record_counts: BTreeMap<String, u64>,
    pub content_hash: String,
}

impl DatasetManifest {
    pub fn new(stage: Stage) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            created_at: 0,
            stage,
            source_descriptors: Vec::new(),
            record_counts: BTreeMap::new(),
            content_hash: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortDataset {
    pub manifest: DatasetManifest,
    pub actors: Vec<ActorRecord>,
    pub commits: Vec<CommitRecord>,
    pub events: Vec<EventRecord>,
    pub teams: Vec<TeamRecord>,
    pub marks: Vec<MarkRecord>,
    pub anatomy_qi: Vec<AnatomyQiRecord>,
    pub anatomy_sensitive: Vec<AnatomySensitiveRecord>,
}

impl CohortDataset {
    pub fn empty(stage: Stage) -> Self {
        Self {
            manifest: DatasetManifest::new(stage),
            actors: Vec::new(),
            commits: Vec::new(),
            events: Vec::new(),
            teams: Vec::new(),
            marks: Vec::new(),
            anatomy_qi: Vec::new(),
            anatomy_sensitive: Vec::new(),
        }
    }

    pub fn stage(&self) -> Stage {
        self.manifest.stage
    }

    /// Sort every table canonically, then recompute record counts and the content hash.
    pub fn seal(mut self) -> Self {
        self.sort_tables();
        self.manifest.source_descriptors.sort();
        self.manifest.source_descriptors.dedup();
        self.manifest.record_counts = self.table_sizes();
        self.manifest.content_hash = content_hash(&self);
        self
    }

    pub(crate) fn sort_tables(&mut self) {
        sort_canonical(&mut self.actors);
        sort_canonical(&mut self.commits);
        sort_canonical(&mut self.events);
        sort_canonical(&mut self.teams);
        sort_canonical(&mut self.marks);
        sort_canonical(&mut self.anatomy_qi);
        sort_canonical(&mut self.anatomy_sensitive);
    }

    /// Move to a later stage and reseal.
    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.manifest.stage = stage;
        self.seal()
    }

    pub fn table_len(&self, table: Table) -> usize {
        match table {
            Table::Actors => self.actors.len(),
            Table::AnatomyQi => self.anatomy_qi.len(),
            Table::AnatomySensitive => self.anatomy_sensitive.len(),
            Table::Commits => self.commits.len(),
            Table::Events => self.events.len(),
            Table::Marks => self.marks.len(),
            Table::Teams => self.teams.len(),
        }
    }

    pub fn table_sizes(&self) -> BTreeMap<String, u64> {
        Table::ALL
            .into_iter()
            .map(|t| (t.name().to_string(), self.table_len(t) as u64))
            .collect()
    }

    /// Latest activity timestamp in the data, or 0 for an empty dataset.
    pub fn latest_activity(&self) -> i64 {
        let commits = self.commits.iter().map(|c| c.authored_at.start_seconds());
        let events = self.events.iter().map(|e| e.occurred_at.start_seconds());
        commits.chain(events).max().unwrap_or(0)
    }

    pub fn actor(&self, actor_id: &str) -> Option<&ActorRecord> {
        self.actors.iter().find(|a| a.actor_id == actor_id)
    }
}

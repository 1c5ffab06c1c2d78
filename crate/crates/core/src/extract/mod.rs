//! Source extraction into a raw [`CohortDataset`].
//!
//! Each extractor reads one source into [`PartialTables`]; [`merge_sources`]
//! joins them. GitLab and Jenkins go through a [`Transport`], so recorded
//! fixture directories exercise exactly the code path used against live
//! services.

mod git;
mod gitlab;
mod jenkins;
mod marks;
mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    ActorRecord, CohortDataset, CommitRecord, EventRecord, MarkRecord, Record, SourceSystem, Stage, Table, TeamRecord,
};

pub use git::{default_branch_head, extract_git, git_actor_id};
pub use gitlab::{extract_gitlab, gitlab_actor_id, gitlab_url, PER_PAGE};
pub use jenkins::{extract_jenkins, jenkins_actor_id, jenkins_url, MAX_BUILDS};
pub use marks::{load_marks, parse_marks, MARKS_HEADER};
pub use transport::{fixture_key, Auth, Fetcher, FixtureTransport, HttpTransport, Response, RetryPolicy, Transport};

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("source configuration: {0}")]
    Config(String),
    #[error("cannot read {locator}: {message}")]
    Source { locator: String, message: String },
    #[error("{endpoint} unreachable: {message}")]
    Unreachable { endpoint: String, message: String },
    #[error("authentication rejected (HTTP {status}) for project {project}")]
    Auth { project: String, status: u16 },
    #[error("rate limited by {endpoint} after {attempts} attempts")]
    RateLimited { endpoint: String, attempts: u32 },
    #[error("HTTP {status} from {endpoint}")]
    Http { endpoint: String, status: u16 },
    #[error("malformed response from {endpoint} (page {page}): {message}")]
    Parse { endpoint: String, page: u32, message: String },
    #[error("marks row {row}: {message}")]
    Marks { row: usize, message: String },
    #[error("marks row {row}: duplicate mark for ({subject}, {assessment})")]
    DuplicateMark { row: usize, subject: String, assessment: String },
    #[error("{table} record {id} extracted twice with different content")]
    Integrity { table: Table, id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    GitRepo,
    GitlabProject,
    JenkinsJob,
    MarksFile,
    /// Recorded responses that replace the network for every GitLab and Jenkins source.
    FixtureDir,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceKind::GitRepo => "git_repo",
            SourceKind::GitlabProject => "gitlab_project",
            SourceKind::JenkinsJob => "jenkins_job",
            SourceKind::MarksFile => "marks_file",
            SourceKind::FixtureDir => "fixture_dir",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDescriptor {
    pub kind: SourceKind,
    /// filesystem path, or an absolute URL for gitlab_project and jenkins_job
    pub locator: String,
    #[serde(default)]
    pub project_id: String,
    /// environment variable holding the API token; empty for none
    #[serde(default)]
    pub auth_token_env: String,
    /// git only: branch used when neither origin/HEAD nor HEAD resolves
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub default_branch: String,
}

impl SourceDescriptor {
    pub fn new(kind: SourceKind, locator: impl Into<String>, project_id: impl Into<String>) -> Self {
        Self {
            kind,
            locator: locator.into(),
            project_id: project_id.into(),
            auth_token_env: String::new(),
            default_branch: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ExtractError> {
        let bad = |m: &str| Err(ExtractError::Config(format!("{} source: {m}", self.kind)));
        if self.locator.is_empty() {
            return bad("empty locator");
        }
        if matches!(self.kind, SourceKind::GitRepo | SourceKind::GitlabProject | SourceKind::JenkinsJob)
            && self.project_id.is_empty()
        {
            return bad("empty project_id");
        }
        if matches!(self.kind, SourceKind::GitlabProject | SourceKind::JenkinsJob) {
            match url::Url::parse(&self.locator) {
                Ok(u) if matches!(u.scheme(), "http" | "https") => {}
                _ => return bad("locator must be an absolute http(s) URL"),
            }
        }
        Ok(())
    }

    /// Provenance label stored in the manifest. Locators are left out because
    /// local paths and URLs can carry personal names.
    pub fn describe(&self) -> String {
        match self.kind {
            SourceKind::MarksFile | SourceKind::FixtureDir => self.kind.to_string(),
            _ => format!("{}:{}", self.kind, self.project_id),
        }
    }

    fn auth(&self) -> Result<Auth, ExtractError> {
        if self.auth_token_env.is_empty() {
            return Ok(Auth::None);
        }
        let token = std::env::var(&self.auth_token_env).map_err(|_| {
            ExtractError::Config(format!("environment variable {} is not set", self.auth_token_env))
        })?;
        Ok(match self.kind {
            SourceKind::JenkinsJob => Auth::Basic(token),
            _ => Auth::PrivateToken(token),
        })
    }
}

/// The tables one extractor produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialTables {
    pub actors: Vec<ActorRecord>,
    pub commits: Vec<CommitRecord>,
    pub events: Vec<EventRecord>,
    pub teams: Vec<TeamRecord>,
    pub marks: Vec<MarkRecord>,
}

fn union<R: Record + PartialEq>(table: Table, parts: impl Iterator<Item = R>) -> Result<Vec<R>, ExtractError> {
    let mut out: BTreeMap<String, R> = BTreeMap::new();
    for r in parts {
        let id = r.primary_id();
        match out.get(&id) {
            Some(prev) if *prev != r => return Err(ExtractError::Integrity { table, id }),
            Some(_) => {}
            None => {
                out.insert(id, r);
            }
        }
    }
    Ok(out.into_values().collect())
}

pub fn marks_actor_id(subject: &str) -> String {
    format!("marks:{subject}")
}

/// Union the parts into a raw dataset. Mark subjects that are not team ids
/// become marks-file actors carrying the subject as their username.
pub fn merge_sources(parts: Vec<PartialTables>, descriptors: &[String]) -> Result<CohortDataset, ExtractError> {
    let mut ds = CohortDataset::empty(Stage::Raw);
    let teams = union(Table::Teams, parts.iter().flat_map(|p| p.teams.iter().cloned()))?;
    let team_ids: BTreeSet<&str> = teams.iter().map(|t| t.team_id.as_str()).collect();

    let mut marks = Vec::new();
    let mut mark_actors = Vec::new();
    for m in parts.iter().flat_map(|p| &p.marks) {
        let mut m = m.clone();
        if !team_ids.contains(m.subject_ref.as_str()) {
            let id = marks_actor_id(&m.subject_ref);
            mark_actors.push(ActorRecord {
                actor_id: id.clone(),
                display_name: String::new(),
                email: String::new(),
                username: m.subject_ref.clone(),
                source_system: SourceSystem::MarksFile,
            });
            m.subject_ref = id;
        }
        marks.push(m);
    }

    ds.actors = union(Table::Actors, parts.iter().flat_map(|p| p.actors.iter().cloned()).chain(mark_actors))?;
    ds.commits = union(Table::Commits, parts.iter().flat_map(|p| p.commits.iter().cloned()))?;
    ds.events = union(Table::Events, parts.iter().flat_map(|p| p.events.iter().cloned()))?;
    ds.marks = union(Table::Marks, marks.into_iter())?;
    ds.teams = teams;
    ds.manifest.source_descriptors = descriptors.to_vec();
    ds.manifest.created_at = ds.latest_activity();
    Ok(ds.seal())
}

/// Run every source and merge. With a fixture_dir source present, GitLab and
/// Jenkins sources read recorded responses from it instead of the network.
pub fn extract_all(
    sources: &[SourceDescriptor],
    retry: RetryPolicy,
    parallelism: usize,
) -> Result<CohortDataset, ExtractError> {
    if sources.is_empty() {
        return Err(ExtractError::Config("no sources configured".into()));
    }
    for s in sources {
        s.validate()?;
    }
    let fixture = sources.iter().find(|s| s.kind == SourceKind::FixtureDir).map(|s| FixtureTransport::new(&s.locator));
    let http = HttpTransport::default();

    let run = |desc: &SourceDescriptor| -> Result<PartialTables, ExtractError> {
        let (transport, auth): (&dyn Transport, Auth) = match &fixture {
            Some(f) => (f, Auth::None),
            None => (&http, desc.auth()?),
        };
        let fetcher = Fetcher { transport, retry, auth, project: desc.project_id.clone() };
        match desc.kind {
            SourceKind::GitRepo => extract_git(desc),
            SourceKind::GitlabProject => extract_gitlab(desc, &fetcher),
            SourceKind::JenkinsJob => extract_jenkins(desc, &fetcher),
            SourceKind::MarksFile => Ok(PartialTables { marks: load_marks(desc)?, ..Default::default() }),
            SourceKind::FixtureDir => Ok(PartialTables::default()),
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ExtractError::Config(e.to_string()))?;
    let parts: Vec<PartialTables> = pool.install(|| sources.par_iter().map(run).collect::<Result<_, _>>())?;
    let descriptors: Vec<String> = sources.iter().map(SourceDescriptor::describe).collect();
    merge_sources(parts, &descriptors)
}

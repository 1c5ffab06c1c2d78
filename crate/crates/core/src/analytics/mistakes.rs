use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::{CohortDataset, EventKind, EventRecord, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MistakeKind {
    /// A non-merge commit landed on the default branch without a merge request.
    DirectDefaultCommit,
    /// A merge request was opened but never merged or closed.
    UnintegratedBranch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MistakeFinding {
    pub kind: MistakeKind,
    pub team_id: String,
    pub subject_ref: String,
    /// commit sha or branch name
    pub evidence: String,
    pub occurred_at: Instant,
}

/// Maps projects and actors to the team they belong to.
struct TeamLookup<'a> {
    by_project: HashMap<&'a str, &'a str>,
    by_member: HashMap<&'a str, &'a str>,
}

impl<'a> TeamLookup<'a> {
    fn new(ds: &'a CohortDataset) -> Self {
        let mut by_project = HashMap::new();
        let mut by_member = HashMap::new();
        for t in &ds.teams {
            by_project.entry(t.project_id.as_str()).or_insert(t.team_id.as_str());
            for m in &t.member_refs {
                by_member.entry(m.as_str()).or_insert(t.team_id.as_str());
            }
        }
        Self { by_project, by_member }
    }

    fn team_for(&self, project: &str, actor: &str) -> String {
        self.by_project
            .get(project)
            .or_else(|| self.by_member.get(actor))
            .map(|t| t.to_string())
            .unwrap_or_default()
    }
}

fn merged_shas(ds: &CohortDataset) -> BTreeSet<&str> {
    ds.events
        .iter()
        .filter(|e| e.kind == EventKind::MrMerged)
        .flat_map(|e| e.payload.values())
        .flat_map(|v| v.split(','))
        .map(str::trim)
        .collect()
}

/// Commits on the default branch's first-parent chain that have exactly one
/// parent and are not referenced by any merged merge request.
pub fn detect_direct_default_commits(ds: &CohortDataset) -> Vec<MistakeFinding> {
    let referenced = merged_shas(ds);
    let teams = TeamLookup::new(ds);
    let mut findings: Vec<MistakeFinding> = ds
        .commits
        .iter()
        .filter(|c| c.on_default_first_parent && c.parent_shas.len() == 1)
        .filter(|c| !referenced.contains(c.sha.as_str()))
        .map(|c| MistakeFinding {
            kind: MistakeKind::DirectDefaultCommit,
            team_id: teams.team_for(&c.repo_id, &c.author_ref),
            subject_ref: c.author_ref.clone(),
            evidence: c.sha.clone(),
            occurred_at: c.authored_at,
        })
        .collect();
    findings.sort_by(|a, b| (a.occurred_at, &a.evidence).cmp(&(b.occurred_at, &b.evidence)));
    findings
}

/// Source branches whose latest merge request opening is never followed by a
/// merge or close within the data window.
pub fn detect_unintegrated_branches(ds: &CohortDataset) -> Vec<MistakeFinding> {
    let teams = TeamLookup::new(ds);
    let mut by_branch: BTreeMap<(&str, &str), Vec<&EventRecord>> = BTreeMap::new();
    for e in ds.events.iter().filter(|e| e.kind.is_merge_request()) {
        if let Some(branch) = e.payload.get("source_branch") {
            by_branch.entry((e.project_id.as_str(), branch.as_str())).or_default().push(e);
        }
    }

    let mut findings = Vec::new();
    for ((project, branch), mut events) in by_branch {
        // openings sort before closings at equal (possibly day-generalised) times
        events.sort_by_key(|e| (e.occurred_at, e.kind != EventKind::MrOpened, e.event_id.as_str()));
        let mut open: Option<&EventRecord> = None;
        for e in events {
            match e.kind {
                EventKind::MrOpened => open = Some(e),
                _ => open = None,
            }
        }
        if let Some(opened) = open {
            findings.push(MistakeFinding {
                kind: MistakeKind::UnintegratedBranch,
                team_id: teams.team_for(project, &opened.actor_ref),
                subject_ref: opened.actor_ref.clone(),
                evidence: branch.to_string(),
                occurred_at: opened.occurred_at,
            });
        }
    }
    findings.sort_by(|a, b| {
        (a.occurred_at, &a.team_id, &a.evidence).cmp(&(b.occurred_at, &b.team_id, &b.evidence))
    });
    findings
}

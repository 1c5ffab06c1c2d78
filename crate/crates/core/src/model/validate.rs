use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::records::*;
use super::{content_hash, CohortDataset, Stage, SCHEMA_VERSION};

/// One broken invariant, located by table and record id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub table: String,
    pub record_id: String,
    pub rule: String,
}

impl Violation {
    fn new(table: impl fmt::Display, record_id: impl Into<String>, rule: impl Into<String>) -> Self {
        Self { table: table.to_string(), record_id: record_id.into(), rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]: {}", self.table, self.record_id, self.rule)
    }
}

pub fn is_sha(s: &str) -> bool {
    s.len() == 40 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Check every record and manifest invariant. An empty result means the dataset is valid.
pub fn validate_dataset(ds: &CohortDataset) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut actor_ids = BTreeSet::new();
    for a in &ds.actors {
        if a.actor_id.is_empty() {
            out.push(Violation::new(Table::Actors, "", "empty actor_id"));
        } else if !actor_ids.insert(a.actor_id.as_str()) {
            out.push(Violation::new(Table::Actors, &a.actor_id, "duplicate actor_id"));
        }
        // anonymisation may legitimately strip every identifying field
        if ds.stage() != Stage::Anonymised
            && a.email.is_empty()
            && a.username.is_empty()
            && a.display_name.is_empty()
        {
            out.push(Violation::new(Table::Actors, &a.actor_id, "no email, username or display_name"));
        }
    }
    let actor_ok = |r: &str| actor_ids.contains(r);

    let mut commit_ids = BTreeSet::new();
    for c in &ds.commits {
        let id = c.primary_id();
        if !is_sha(&c.sha) {
            out.push(Violation::new(Table::Commits, &id, "malformed sha"));
        }
        if !commit_ids.insert(id.clone()) {
            out.push(Violation::new(Table::Commits, &id, "duplicate commit"));
        }
        for p in &c.parent_shas {
            if !is_sha(p) {
                out.push(Violation::new(Table::Commits, &id, format!("malformed parent sha {p:?}")));
            } else if *p == c.sha {
                out.push(Violation::new(Table::Commits, &id, "commit is its own parent"));
            }
        }
        if !actor_ok(&c.author_ref) {
            out.push(Violation::new(Table::Commits, &id, "unresolved actor_ref (author)"));
        }
        if !actor_ok(&c.committer_ref) {
            out.push(Violation::new(Table::Commits, &id, "unresolved actor_ref (committer)"));
        }
        for (name, m) in [("insertions", c.insertions), ("deletions", c.deletions)] {
            if m.is_some_and(|m| m.lower() < 0.0) {
                out.push(Violation::new(Table::Commits, &id, format!("negative {name}")));
            }
        }
    }

    let mut event_ids = BTreeSet::new();
    for e in &ds.events {
        if !event_ids.insert(e.event_id.as_str()) {
            out.push(Violation::new(Table::Events, &e.event_id, "duplicate event_id"));
        }
        if !actor_ok(&e.actor_ref) {
            out.push(Violation::new(Table::Events, &e.event_id, "unresolved actor_ref"));
        }
        if e.kind.is_merge_request() && !e.payload.contains_key("source_branch") {
            out.push(Violation::new(Table::Events, &e.event_id, "merge request event lacks source_branch"));
        }
        if e.kind == EventKind::BuildResult {
            match e.payload.get("build_status") {
                Some(s) if BUILD_STATUSES.contains(&s.as_str()) => {}
                Some(s) => out.push(Violation::new(Table::Events, &e.event_id, format!("unknown build_status {s:?}"))),
                None => out.push(Violation::new(Table::Events, &e.event_id, "build_result lacks build_status")),
            }
        }
    }

    let mut team_ids = BTreeSet::new();
    for t in &ds.teams {
        if !team_ids.insert(t.team_id.as_str()) {
            out.push(Violation::new(Table::Teams, &t.team_id, "duplicate team_id"));
        }
        if t.member_refs.is_empty() {
            out.push(Violation::new(Table::Teams, &t.team_id, "team has no members"));
        }
        let mut seen = BTreeSet::new();
        for m in &t.member_refs {
            if !seen.insert(m.as_str()) {
                out.push(Violation::new(Table::Teams, &t.team_id, format!("duplicate member {m:?}")));
            }
            if !actor_ok(m) {
                out.push(Violation::new(Table::Teams, &t.team_id, format!("unresolved member_ref {m:?}")));
            }
        }
    }

    let mut mark_ids = BTreeSet::new();
    for m in &ds.marks {
        let id = m.primary_id();
        if !mark_ids.insert(id.clone()) {
            out.push(Violation::new(Table::Marks, &id, "duplicate (subject, assessment)"));
        }
        let lo = m.value.lower();
        if !(0.0..=100.0).contains(&lo) || !m.value.representative().is_finite() {
            out.push(Violation::new(Table::Marks, &id, "value outside [0,100]"));
        }
        if !actor_ok(&m.subject_ref) && !team_ids.contains(m.subject_ref.as_str()) {
            out.push(Violation::new(Table::Marks, &id, "unresolved subject_ref"));
        }
    }

    let groups: BTreeMap<&str, &AnatomySensitiveRecord> =
        ds.anatomy_sensitive.iter().map(|g| (g.group_id.as_str(), g)).collect();
    let mut qi_ids = BTreeSet::new();
    for q in &ds.anatomy_qi {
        if !qi_ids.insert(q.record_id.as_str()) {
            out.push(Violation::new(Table::AnatomyQi, &q.record_id, "duplicate record_id"));
        }
        if !groups.contains_key(q.group_id.as_str()) {
            out.push(Violation::new(Table::AnatomyQi, &q.record_id, "unresolved group_id"));
        }
    }
    if groups.len() != ds.anatomy_sensitive.len() {
        out.push(Violation::new(Table::AnatomySensitive, "", "duplicate group_id"));
    }

    let m = &ds.manifest;
    if m.schema_version != SCHEMA_VERSION {
        out.push(Violation::new("manifest", "", format!("schema_version {:?}", m.schema_version)));
    }
    if m.record_counts != ds.table_sizes() {
        out.push(Violation::new("manifest", "", "record_counts do not match tables"));
    }
    if m.content_hash != content_hash(ds) {
        out.push(Violation::new("manifest", "", "content_hash does not match contents"));
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Instant;

    fn actor(id: &str) -> ActorRecord {
        ActorRecord {
            actor_id: id.into(),
            display_name: format!("{id} name"),
            email: String::new(),
            username: String::new(),
            source_system: SourceSystem::Git,
        }
    }

    fn commit(sha: char, author: &str) -> CommitRecord {
        CommitRecord {
            sha: sha.to_string().repeat(40),
            repo_id: "repo".into(),
            author_ref: author.into(),
            committer_ref: author.into(),
            authored_at: Instant::Seconds(0),
            message: "m".into(),
            parent_shas: vec![],
            on_default_first_parent: true,
            insertions: None,
            deletions: None,
        }
    }

    fn two_actor_dataset() -> CohortDataset {
        let mut ds = CohortDataset::empty(Stage::Raw);
        ds.actors = vec![actor("a"), actor("b")];
        ds.commits = vec![commit('1', "a"), commit('2', "b"), commit('3', "a")];
        ds.seal()
    }

    #[test]
    fn well_formed_dataset_has_no_violations() {
        assert_eq!(validate_dataset(&two_actor_dataset()), vec![]);
    }

    #[test]
    fn ghost_author_is_one_violation() {
        let mut ds = two_actor_dataset();
        ds.commits[1].author_ref = "ghost".into();
        ds.commits[1].committer_ref = "b".into();
        let ds = ds.seal();
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].record_id.ends_with(&"2".repeat(40)));
        assert!(v[0].rule.contains("unresolved actor_ref"));
    }

    #[test]
    fn stale_hash_is_detected() {
        let mut ds = two_actor_dataset();
        ds.commits[0].message = "changed".into();
        let v = validate_dataset(&ds);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].table, "manifest");
    }

    #[test]
    fn build_result_needs_known_status() {
        let mut ds = two_actor_dataset();
        ds.events.push(EventRecord {
            event_id: "e".into(),
            kind: EventKind::BuildResult,
            actor_ref: "a".into(),
            project_id: "p".into(),
            occurred_at: Instant::Seconds(1),
            payload: [("build_status".to_string(), "exploded".to_string())].into(),
        });
        let v = validate_dataset(&ds.seal());
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("build_status"));
    }
}

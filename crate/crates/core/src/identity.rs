//! De-duplication of actor records into canonical persons.
//!
//! Two actor records belong to the same person iff they are connected by a
//! chain of: equal non-empty email (trimmed, case-insensitive), equal
//! non-empty username (case-sensitive), or an operator alias rule. Display
//! names never merge on their own. Each cluster's canonical id is its
//! lexicographically smallest actor id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::model::{ActorRecord, CohortDataset, MarkRecord, Stage};

#[derive(Debug, thiserror::Error)]
pub enum IdentityError {
    #[error("alias rule references unknown actor {0:?}")]
    UnknownAlias(String),
    #[error("alias file {path}: {message}")]
    AliasFile { path: String, message: String },
    #[error("identity map does not partition the actor table: {0}")]
    NotAPartition(String),
    #[error("merged actor {subject:?} has conflicting marks for {assessment:?}")]
    ConflictingMarks { subject: String, assessment: String },
}

/// Disjoint-set forest over actor indices.
#[derive(Debug, Clone)]
struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
    }
}

/// An operator assertion that two actor ids are the same person.
pub type AliasRule = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdentityMap {
    /// canonical id -> member actor ids (canonical id included)
    pub clusters: BTreeMap<String, BTreeSet<String>>,
    pub alias_rules: Vec<AliasRule>,
}

impl IdentityMap {
    /// actor id -> canonical id
    pub fn canonical_index(&self) -> HashMap<&str, &str> {
        self.clusters
            .iter()
            .flat_map(|(canon, members)| members.iter().map(move |m| (m.as_str(), canon.as_str())))
            .collect()
    }

    pub fn person_count(&self) -> usize {
        self.clusters.len()
    }
}

pub fn normalize_email(email: &str) -> String {
    email.trim().to_lowercase()
}

/// Partition `actors` into clusters of the same person.
pub fn build_clusters(actors: &[ActorRecord], alias_rules: &[AliasRule]) -> Result<IdentityMap, IdentityError> {
    let mut ids: Vec<&str> = actors.iter().map(|a| a.actor_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut sets = DisjointSet::new(ids.len());

    let mut by_email: HashMap<String, usize> = HashMap::new();
    let mut by_username: HashMap<&str, usize> = HashMap::new();
    for a in actors {
        let i = index[a.actor_id.as_str()];
        let email = normalize_email(&a.email);
        if !email.is_empty() {
            let first = *by_email.entry(email).or_insert(i);
            sets.union(first, i);
        }
        if !a.username.is_empty() {
            let first = *by_username.entry(a.username.as_str()).or_insert(i);
            sets.union(first, i);
        }
    }
    for (a, b) in alias_rules {
        let ia = *index.get(a.as_str()).ok_or_else(|| IdentityError::UnknownAlias(a.clone()))?;
        let ib = *index.get(b.as_str()).ok_or_else(|| IdentityError::UnknownAlias(b.clone()))?;
        sets.union(ia, ib);
    }

    let mut by_root: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        by_root.entry(sets.find(i)).or_default().insert(id.to_string());
    }
    let clusters = by_root
        .into_values()
        .map(|members| (members.first().expect("non-empty cluster").clone(), members))
        .collect();
    Ok(IdentityMap { clusters, alias_rules: alias_rules.to_vec() })
}

/// Rewrite every actor reference onto canonical ids and collapse each cluster
/// to one actor record. The result is at stage `resolved`.
pub fn apply_clusters(ds: &CohortDataset, im: &IdentityMap) -> Result<CohortDataset, IdentityError> {
    let canon = im.canonical_index();
    let actor_ids: BTreeSet<&str> = ds.actors.iter().map(|a| a.actor_id.as_str()).collect();
    let mapped: BTreeSet<&str> = canon.keys().copied().collect();
    if actor_ids != mapped {
        let missing = actor_ids.symmetric_difference(&mapped).next().copied().unwrap_or_default();
        return Err(IdentityError::NotAPartition(missing.to_string()));
    }
    let total: usize = im.clusters.values().map(BTreeSet::len).sum();
    if total != mapped.len() {
        return Err(IdentityError::NotAPartition("actor in several clusters".into()));
    }
    let rewrite = |r: &str| canon.get(r).map(|c| c.to_string()).unwrap_or_else(|| r.to_string());

    let mut out = ds.clone();

    let mut grouped: BTreeMap<&str, Vec<&ActorRecord>> = BTreeMap::new();
    for a in &ds.actors {
        grouped.entry(canon[a.actor_id.as_str()]).or_default().push(a);
    }
    out.actors = grouped
        .into_iter()
        .map(|(canonical, mut members)| {
            members.sort_by(|x, y| {
                (x.source_system.merge_priority(), &x.actor_id)
                    .cmp(&(y.source_system.merge_priority(), &y.actor_id))
            });
            let pick = |f: fn(&ActorRecord) -> &String| {
                members.iter().map(|m| f(m)).find(|v| !v.is_empty()).cloned().unwrap_or_default()
            };
            ActorRecord {
                actor_id: canonical.to_string(),
                display_name: pick(|a| &a.display_name),
                email: pick(|a| &a.email),
                username: pick(|a| &a.username),
                source_system: members[0].source_system,
            }
        })
        .collect();

    for c in &mut out.commits {
        c.author_ref = rewrite(&c.author_ref);
        c.committer_ref = rewrite(&c.committer_ref);
    }
    for e in &mut out.events {
        e.actor_ref = rewrite(&e.actor_ref);
    }
    for t in &mut out.teams {
        let mut seen = BTreeSet::new();
        t.member_refs = t
            .member_refs
            .iter()
            .map(|m| rewrite(m))
            .filter(|m| seen.insert(m.clone()))
            .collect();
    }

    let mut marks: BTreeMap<(String, String), MarkRecord> = BTreeMap::new();
    for m in &ds.marks {
        let mut m = m.clone();
        m.subject_ref = rewrite(&m.subject_ref);
        let key = (m.subject_ref.clone(), m.assessment_id.clone());
        match marks.get(&key) {
            Some(existing) if existing.value != m.value => {
                return Err(IdentityError::ConflictingMarks { subject: key.0, assessment: key.1 });
            }
            Some(_) => {}
            None => {
                marks.insert(key, m);
            }
        }
    }
    out.marks = marks.into_values().collect();

    out.manifest.stage = Stage::Resolved;
    Ok(out.seal())
}

/// Parse alias rules from text with header `actor_a,actor_b`.
pub fn parse_alias_rules(text: &str) -> Result<Vec<AliasRule>, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != ["actor_a", "actor_b"] {
        return Err(format!("expected header actor_a,actor_b, found {:?}", headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rules = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| format!("row {}: {e}", i + 2))?;
        if row.len() != 2 || row[0].is_empty() || row[1].is_empty() {
            return Err(format!("row {}: expected two actor ids", i + 2));
        }
        rules.push((row[0].to_string(), row[1].to_string()));
    }
    Ok(rules)
}

pub fn load_alias_file(path: &Path) -> Result<Vec<AliasRule>, IdentityError> {
    let err = |message: String| IdentityError::AliasFile { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    parse_alias_rules(&text).map_err(err)
}

/// Build and apply clusters in one step.
pub fn resolve(ds: &CohortDataset, alias_rules: &[AliasRule]) -> Result<(CohortDataset, IdentityMap), IdentityError> {
    let im = build_clusters(&ds.actors, alias_rules)?;
    let resolved = apply_clusters(ds, &im)?;
    Ok((resolved, im))
}

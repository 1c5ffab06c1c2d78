use std::collections::{BTreeMap, HashSet};

use git2::{Oid, Repository};
use sha2::{Digest, Sha256};

use crate::model::{ActorRecord, CommitRecord, Instant, Measure, SourceSystem};

use super::{ExtractError, PartialTables, SourceDescriptor};

/// Actor id for a git signature: a digest of the exact (name, email) pair.
pub fn git_actor_id(name: &str, email: &str) -> String {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update([0]);
    h.update(email.as_bytes());
    format!("git:{}", &hex::encode(h.finalize())[..16])
}

fn source_err(desc: &SourceDescriptor, e: impl std::fmt::Display) -> ExtractError {
    ExtractError::Source { locator: desc.locator.clone(), message: e.to_string() }
}

fn resolve_commit(repo: &Repository, name: &str) -> Option<Oid> {
    let r = repo.find_reference(name).ok()?.resolve().ok()?;
    r.peel_to_commit().ok().map(|c| c.id())
}

/// Remote symbolic head, then local HEAD, then the descriptor's override.
pub fn default_branch_head(repo: &Repository, override_branch: &str) -> Option<Oid> {
    resolve_commit(repo, "refs/remotes/origin/HEAD")
        .or_else(|| repo.head().ok().and_then(|h| h.peel_to_commit().ok()).map(|c| c.id()))
        .or_else(|| {
            if override_branch.is_empty() {
                return None;
            }
            resolve_commit(repo, &format!("refs/heads/{override_branch}"))
                .or_else(|| resolve_commit(repo, &format!("refs/remotes/origin/{override_branch}")))
        })
}

/// Every commit reachable from a local or remote branch, with authors and
/// committers as git actors.
pub fn extract_git(desc: &SourceDescriptor) -> Result<PartialTables, ExtractError> {
    let repo = Repository::open(&desc.locator).map_err(|e| source_err(desc, e))?;

    let mut walk = repo.revwalk().map_err(|e| source_err(desc, e))?;
    for glob in ["refs/heads/*", "refs/remotes/*"] {
        walk.push_glob(glob).map_err(|e| source_err(desc, e))?;
    }
    let oids: Vec<Oid> = walk.collect::<Result<_, _>>().map_err(|e| source_err(desc, e))?;
    if oids.is_empty() {
        return Ok(PartialTables::default());
    }

    let head = default_branch_head(&repo, &desc.default_branch)
        .ok_or_else(|| source_err(desc, "no resolvable default branch"))?;
    let mut first_parent = HashSet::new();
    let mut cursor = Some(repo.find_commit(head).map_err(|e| source_err(desc, e))?);
    while let Some(c) = cursor {
        first_parent.insert(c.id());
        cursor = c.parent(0).ok();
    }

    let mut actors: BTreeMap<String, ActorRecord> = BTreeMap::new();
    let mut person = |sig: &git2::Signature| -> String {
        let name = String::from_utf8_lossy(sig.name_bytes()).into_owned();
        let email = String::from_utf8_lossy(sig.email_bytes()).into_owned();
        let id = git_actor_id(&name, &email);
        actors.entry(id.clone()).or_insert_with(|| ActorRecord {
            actor_id: id.clone(),
            display_name: name,
            email,
            username: String::new(),
            source_system: SourceSystem::Git,
        });
        id
    };

    let mut commits = Vec::with_capacity(oids.len());
    for oid in oids {
        let c = repo.find_commit(oid).map_err(|e| source_err(desc, e))?;
        let tree = c.tree().map_err(|e| source_err(desc, e))?;
        let parent_tree = match c.parent(0) {
            Ok(p) => Some(p.tree().map_err(|e| source_err(desc, e))?),
            Err(_) => None,
        };
        let stats = repo
            .diff_tree_to_tree(parent_tree.as_ref(), Some(&tree), None)
            .and_then(|d| d.stats())
            .map_err(|e| source_err(desc, e))?;

        commits.push(CommitRecord {
            sha: oid.to_string(),
            repo_id: desc.project_id.clone(),
            author_ref: person(&c.author()),
            committer_ref: person(&c.committer()),
            authored_at: Instant::Seconds(c.author().when().seconds()),
            message: String::from_utf8_lossy(c.message_bytes()).into_owned(),
            parent_shas: c.parent_ids().map(|p| p.to_string()).collect(),
            on_default_first_parent: first_parent.contains(&oid),
            insertions: Some(Measure::Exact(stats.insertions() as f64)),
            deletions: Some(Measure::Exact(stats.deletions() as f64)),
        });
    }

    Ok(PartialTables { actors: actors.into_values().collect(), commits, ..Default::default() })
}

use std::collections::BTreeMap;

use chrono::DateTime;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use url::Url;

use crate::model::{ActorRecord, EventKind, EventRecord, Instant, SourceSystem, TeamRecord};

use super::transport::{redact, Fetcher};
use super::{ExtractError, PartialTables, SourceDescriptor};

pub const PER_PAGE: u32 = 100;
const MAX_PAGES: u32 = 10_000;

#[derive(Debug, Clone, Default, Deserialize)]
pub struct GlUser {
    pub id: u64,
    #[serde(default)]
    pub username: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub public_email: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GlMergeRequest {
    pub iid: u64,
    pub state: String,
    pub created_at: String,
    #[serde(default)]
    pub updated_at: Option<String>,
    #[serde(default)]
    pub merged_at: Option<String>,
    #[serde(default)]
    pub closed_at: Option<String>,
    pub author: GlUser,
    #[serde(default)]
    pub merged_by: Option<GlUser>,
    #[serde(default)]
    pub closed_by: Option<GlUser>,
    pub source_branch: String,
    #[serde(default)]
    pub target_branch: String,
    #[serde(default)]
    pub merge_commit_sha: Option<String>,
    #[serde(default)]
    pub squash_commit_sha: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GlIssue {
    pub iid: u64,
    pub state: String,
    pub created_at: String,
    #[serde(default)]
    pub updated_at: Option<String>,
    #[serde(default)]
    pub closed_at: Option<String>,
    pub author: GlUser,
    #[serde(default)]
    pub closed_by: Option<GlUser>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GlNote {
    pub id: u64,
    pub author: GlUser,
    pub created_at: String,
    #[serde(default)]
    pub system: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GlPipeline {
    pub id: u64,
    pub status: String,
    #[serde(default, rename = "ref")]
    pub git_ref: String,
    #[serde(default)]
    pub sha: String,
    pub created_at: String,
    #[serde(default)]
    pub user: Option<GlUser>,
}

/// `<locator>/<resource>?[state=all&]per_page=100&page=N`
pub fn gitlab_url(locator: &str, resource: &str, with_state: bool, page: u32) -> Result<Url, ExtractError> {
    let mut url = Url::parse(&format!("{}/{resource}", locator.trim_end_matches('/')))
        .map_err(|e| ExtractError::Config(format!("{locator}: {e}")))?;
    {
        let mut q = url.query_pairs_mut();
        if with_state {
            q.append_pair("state", "all");
        }
        q.append_pair("per_page", &PER_PAGE.to_string());
        q.append_pair("page", &page.to_string());
    }
    Ok(url)
}

pub fn gitlab_actor_id(user_id: u64) -> String {
    format!("gitlab:{user_id}")
}

/// Every page of a list endpoint, in order, stopping at an empty or short page.
fn paginate<T: DeserializeOwned>(
    fetcher: &Fetcher,
    locator: &str,
    resource: &str,
    with_state: bool,
) -> Result<Vec<(Url, u32, Vec<T>)>, ExtractError> {
    let mut pages = Vec::new();
    for page in 1..=MAX_PAGES {
        let url = gitlab_url(locator, resource, with_state, page)?;
        let items: Vec<T> = fetcher.get_json(&url, page)?;
        let len = items.len();
        if len > 0 {
            pages.push((url, page, items));
        }
        if len < PER_PAGE as usize {
            break;
        }
    }
    Ok(pages)
}

fn timestamp(raw: &str, url: &Url, page: u32) -> Result<Instant, ExtractError> {
    DateTime::parse_from_rfc3339(raw)
        .map(|t| Instant::Seconds(t.timestamp()))
        .map_err(|e| ExtractError::Parse { endpoint: redact(url), page, message: format!("timestamp {raw:?}: {e}") })
}

struct Collector {
    project: String,
    actors: BTreeMap<u64, ActorRecord>,
    events: BTreeMap<String, EventRecord>,
}

impl Collector {
    fn actor(&mut self, u: &GlUser) -> String {
        let id = gitlab_actor_id(u.id);
        let rec = self.actors.entry(u.id).or_insert_with(|| ActorRecord {
            actor_id: id.clone(),
            display_name: String::new(),
            email: String::new(),
            username: String::new(),
            source_system: SourceSystem::Gitlab,
        });
        if rec.username.is_empty() {
            rec.username = u.username.clone();
        }
        if rec.display_name.is_empty() {
            rec.display_name = u.name.clone();
        }
        if rec.email.is_empty() {
            rec.email = u.public_email.clone().unwrap_or_default();
        }
        id
    }

    /// Later pages overwrite earlier ones.
    fn event(&mut self, id: String, kind: EventKind, actor: &GlUser, at: Instant, payload: &[(&str, String)]) {
        let actor_ref = self.actor(actor);
        let payload = payload.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (k.to_string(), v.clone())).collect();
        self.events.insert(
            id.clone(),
            EventRecord { event_id: id, kind, actor_ref, project_id: self.project.clone(), occurred_at: at, payload },
        );
    }
}

/// Merge requests, issues, their comments, pipelines and project membership.
pub fn extract_gitlab(desc: &SourceDescriptor, fetcher: &Fetcher) -> Result<PartialTables, ExtractError> {
    let loc = desc.locator.as_str();
    let proj = desc.project_id.as_str();
    let mut col = Collector { project: proj.to_string(), actors: BTreeMap::new(), events: BTreeMap::new() };

    let mut members = Vec::new();
    for (_, _, users) in paginate::<GlUser>(fetcher, loc, "members/all", false)? {
        for u in users {
            members.push(col.actor(&u));
        }
    }
    members.sort();
    members.dedup();

    let mut noteables = Vec::new();
    for (url, page, mrs) in paginate::<GlMergeRequest>(fetcher, loc, "merge_requests", true)? {
        for mr in mrs {
            let base = [
                ("mr_iid", mr.iid.to_string()),
                ("source_branch", mr.source_branch.clone()),
                ("target_branch", mr.target_branch.clone()),
            ];
            let opened = timestamp(&mr.created_at, &url, page)?;
            col.event(format!("gitlab-mr:{proj}:{}:opened", mr.iid), EventKind::MrOpened, &mr.author, opened, &base);
            let end = |t: &Option<String>| t.as_ref().or(mr.updated_at.as_ref()).map(|s| timestamp(s, &url, page));
            match mr.state.as_str() {
                "merged" => {
                    let at = end(&mr.merged_at).transpose()?.unwrap_or(opened);
                    let mut payload = base.to_vec();
                    payload.push(("merge_commit_sha", mr.merge_commit_sha.clone().unwrap_or_default()));
                    payload.push(("squash_commit_sha", mr.squash_commit_sha.clone().unwrap_or_default()));
                    let by = mr.merged_by.as_ref().unwrap_or(&mr.author);
                    col.event(format!("gitlab-mr:{proj}:{}:merged", mr.iid), EventKind::MrMerged, by, at, &payload);
                }
                "closed" => {
                    let at = end(&mr.closed_at).transpose()?.unwrap_or(opened);
                    let by = mr.closed_by.as_ref().unwrap_or(&mr.author);
                    col.event(format!("gitlab-mr:{proj}:{}:closed", mr.iid), EventKind::MrClosed, by, at, &base);
                }
                _ => {}
            }
            noteables.push(("merge_requests", mr.iid));
        }
    }

    for (url, page, issues) in paginate::<GlIssue>(fetcher, loc, "issues", true)? {
        for issue in issues {
            let payload = [("issue_iid", issue.iid.to_string())];
            let opened = timestamp(&issue.created_at, &url, page)?;
            col.event(format!("gitlab-issue:{proj}:{}:opened", issue.iid), EventKind::IssueOpened, &issue.author, opened, &payload);
            if issue.state == "closed" {
                let at = match issue.closed_at.as_ref().or(issue.updated_at.as_ref()) {
                    Some(s) => timestamp(s, &url, page)?,
                    None => opened,
                };
                let by = issue.closed_by.as_ref().unwrap_or(&issue.author);
                col.event(format!("gitlab-issue:{proj}:{}:closed", issue.iid), EventKind::IssueClosed, by, at, &payload);
            }
            noteables.push(("issues", issue.iid));
        }
    }

    for (kind, iid) in noteables {
        let noteable = if kind == "issues" { format!("issue:{iid}") } else { format!("merge_request:{iid}") };
        for (url, page, notes) in paginate::<GlNote>(fetcher, loc, &format!("{kind}/{iid}/notes"), false)? {
            for note in notes.into_iter().filter(|n| !n.system) {
                let at = timestamp(&note.created_at, &url, page)?;
                let payload = [("noteable", noteable.clone())];
                col.event(format!("gitlab-note:{proj}:{}", note.id), EventKind::Comment, &note.author, at, &payload);
            }
        }
    }

    for (url, page, pipelines) in paginate::<GlPipeline>(fetcher, loc, "pipelines", false)? {
        // the list endpoint may omit the triggering user; such runs cannot be attributed
        for p in pipelines {
            let Some(user) = &p.user else { continue };
            let at = timestamp(&p.created_at, &url, page)?;
            let payload = [("status", p.status.clone()), ("ref", p.git_ref.clone()), ("sha", p.sha.clone())];
            col.event(format!("gitlab-pipeline:{proj}:{}", p.id), EventKind::PipelineRun, user, at, &payload);
        }
    }

    let teams = if members.is_empty() {
        Vec::new()
    } else {
        vec![TeamRecord { team_id: proj.to_string(), project_id: proj.to_string(), member_refs: members }]
    };
    Ok(PartialTables {
        actors: col.actors.into_values().collect(),
        events: col.events.into_values().collect(),
        teams,
        ..Default::default()
    })
}

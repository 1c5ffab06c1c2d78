//! Renders simulated histories as GitLab/Jenkins API responses, a marks file,
//! and real git objects on disk.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, SecondsFormat};
use git2::Repository;
use serde_json::{json, Value};
use url::Url;

use crate::extract::{fixture_key, gitlab_url, jenkins_url, Auth, ExtractError, Response, Transport, PER_PAGE};

use super::history::{MrState, Person, TeamHistory};

pub fn rfc3339(secs: i64) -> String {
    DateTime::from_timestamp(secs, 0).expect("in range").to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn gitlab_locator(team: usize) -> String {
    format!("https://gitlab.example.invalid/api/v4/projects/{}", 101 + team)
}

pub fn jenkins_locator(team: usize) -> String {
    format!("https://ci.example.invalid/job/team-{:02}", team + 1)
}

/// Recorded responses keyed by fixture file name.
#[derive(Debug, Clone, Default)]
pub struct Fixtures(pub BTreeMap<String, Vec<u8>>);

impl Fixtures {
    fn put(&mut self, url: &Url, body: &Value) {
        self.0.insert(fixture_key(url), serde_json::to_vec_pretty(body).expect("json"));
    }

    /// Pages of at most 100, ending with an empty page when the last one is full.
    fn paged(&mut self, locator: &str, resource: &str, with_state: bool, items: Vec<Value>) {
        let mut page = 1;
        let mut rest = items.as_slice();
        loop {
            let n = rest.len().min(PER_PAGE as usize);
            let url = gitlab_url(locator, resource, with_state, page).expect("valid locator");
            self.put(&url, &Value::Array(rest[..n].to_vec()));
            rest = &rest[n..];
            if n < PER_PAGE as usize {
                break;
            }
            page += 1;
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.0 {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

impl Transport for Fixtures {
    fn get(&self, url: &Url, _auth: &Auth) -> Result<Response, ExtractError> {
        Ok(match self.0.get(&fixture_key(url)) {
            Some(body) => Response { status: 200, body: body.clone() },
            None => Response { status: 404, body: Vec::new() },
        })
    }
}

fn user(p: &Person) -> Value {
    json!({
        "id": p.gitlab_id,
        "username": p.username,
        "name": p.name,
        "public_email": p.email,
        "state": "active",
    })
}

pub fn emit_team(h: &TeamHistory, people: &[Person], fx: &mut Fixtures) {
    let loc = gitlab_locator(h.team);
    fx.paged(&loc, "members/all", false, h.members.iter().map(|m| user(&people[*m])).collect());

    let mrs = h
        .mrs
        .iter()
        .rev()
        .map(|mr| {
            let end = mr.ended.map(|(t, _)| t);
            let by = |state| match (mr.state == state, mr.ended) {
                (true, Some((_, p))) => user(&people[p]),
                _ => Value::Null,
            };
            json!({
                "id": mr.id,
                "iid": mr.iid,
                "state": match mr.state { MrState::Opened => "opened", MrState::Merged => "merged", MrState::Closed => "closed" },
                "created_at": rfc3339(mr.created_at),
                "updated_at": rfc3339(end.unwrap_or(mr.created_at)),
                "merged_at": if mr.state == MrState::Merged { json!(rfc3339(end.unwrap())) } else { Value::Null },
                "closed_at": if mr.state == MrState::Closed { json!(rfc3339(end.unwrap())) } else { Value::Null },
                "author": user(&people[mr.author]),
                "merged_by": by(MrState::Merged),
                "closed_by": by(MrState::Closed),
                "source_branch": mr.source_branch,
                "target_branch": "main",
                "merge_commit_sha": mr.merge_commit_sha.map(|o| o.to_string()),
                "squash_commit_sha": mr.squash_commit_sha.map(|o| o.to_string()),
            })
        })
        .collect();
    fx.paged(&loc, "merge_requests", true, mrs);

    let issues = h
        .issues
        .iter()
        .rev()
        .map(|i| {
            json!({
                "id": i.id,
                "iid": i.iid,
                "state": if i.closed.is_some() { "closed" } else { "opened" },
                "created_at": rfc3339(i.created_at),
                "closed_at": i.closed.map(|(t, _)| rfc3339(t)),
                "author": user(&people[i.author]),
                "closed_by": i.closed.map(|(_, p)| user(&people[p])),
            })
        })
        .collect();
    fx.paged(&loc, "issues", true, issues);

    let mut notes: BTreeMap<(&str, u64), Vec<Value>> = BTreeMap::new();
    for mr in &h.mrs {
        notes.entry(("merge_requests", mr.iid)).or_default();
    }
    for i in &h.issues {
        notes.entry(("issues", i.iid)).or_default();
    }
    for n in &h.notes {
        notes.entry(n.on).or_default().push(json!({
            "id": n.id,
            "body": if n.system { "changed the state" } else { "looks reasonable" },
            "author": user(&people[n.author]),
            "created_at": rfc3339(n.at),
            "system": n.system,
        }));
    }
    for ((kind, iid), list) in notes {
        fx.paged(&loc, &format!("{kind}/{iid}/notes"), false, list);
    }

    let pipelines = h
        .pipelines
        .iter()
        .rev()
        .map(|p| {
            json!({
                "id": p.id,
                "status": p.status,
                "ref": p.git_ref,
                "sha": p.sha.to_string(),
                "created_at": rfc3339(p.at),
                "user": user(&people[p.user]),
            })
        })
        .collect();
    fx.paged(&loc, "pipelines", false, pipelines);

    let builds: Vec<Value> = h
        .builds
        .iter()
        .rev()
        .map(|b| json!({"number": b.number, "result": b.result, "timestamp": b.timestamp_ms}))
        .collect();
    let url = jenkins_url(&jenkins_locator(h.team)).expect("valid locator");
    fx.put(&url, &json!({ "_class": "hudson.model.FreeStyleProject", "builds": builds }));
}

/// Write the team's objects into a bare repository with `main` as HEAD.
pub fn write_repo(h: &TeamHistory, path: &Path) -> Result<(), git2::Error> {
    let repo = Repository::init_bare(path)?;
    let odb = repo.odb()?;
    for (kind, bytes, oid) in &h.objects {
        let written = odb.write(*kind, bytes)?;
        assert_eq!(written, *oid, "object hash mismatch");
    }
    for (name, oid) in &h.refs {
        repo.reference(name, *oid, true, "synthetic history")?;
    }
    repo.set_head("refs/heads/main")?;
    Ok(())
}

pub fn marks_csv(rows: &[(String, String, f64)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(crate::extract::MARKS_HEADER).expect("in memory");
    for (s, a, v) in rows {
        w.write_record([s.as_str(), a.as_str(), &v.to_string()]).expect("in memory");
    }
    String::from_utf8(w.into_inner().expect("in memory")).expect("utf8")
}

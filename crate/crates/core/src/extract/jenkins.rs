use serde::Deserialize;
use url::Url;

use crate::model::{ActorRecord, EventKind, EventRecord, Instant, SourceSystem};

use super::transport::Fetcher;
use super::{ExtractError, PartialTables, SourceDescriptor};

pub const MAX_BUILDS: u32 = 1000;

#[derive(Debug, Clone, Deserialize)]
pub struct JenkinsBuild {
    pub number: u64,
    #[serde(default)]
    pub result: Option<String>,
    /// milliseconds since the epoch
    pub timestamp: i64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct JenkinsJob {
    #[serde(default)]
    pub builds: Vec<JenkinsBuild>,
}

pub fn jenkins_url(locator: &str) -> Result<Url, ExtractError> {
    Url::parse(&format!(
        "{}/api/json?tree=builds[number,result,timestamp]{{0,{MAX_BUILDS}}}",
        locator.trim_end_matches('/')
    ))
    .map_err(|e| ExtractError::Config(format!("{locator}: {e}")))
}

/// The job's builds carry no user, so each job gets one service actor.
pub fn jenkins_actor_id(project_id: &str) -> String {
    format!("jenkins:{project_id}")
}

fn status(result: &str) -> Option<&'static str> {
    match result {
        "SUCCESS" => Some("success"),
        "FAILURE" => Some("failure"),
        "UNSTABLE" => Some("unstable"),
        "ABORTED" => Some("aborted"),
        _ => None,
    }
}

/// One build_result event per completed build. Running and not-built builds are skipped.
pub fn extract_jenkins(desc: &SourceDescriptor, fetcher: &Fetcher) -> Result<PartialTables, ExtractError> {
    let url = jenkins_url(&desc.locator)?;
    let job: JenkinsJob = fetcher.get_json(&url, 0)?;
    let actor_id = jenkins_actor_id(&desc.project_id);

    let mut events: Vec<EventRecord> = job
        .builds
        .iter()
        .filter_map(|b| Some((b, status(b.result.as_deref()?)?)))
        .map(|(b, s)| EventRecord {
            event_id: format!("jenkins-build:{}:{}", desc.project_id, b.number),
            kind: EventKind::BuildResult,
            actor_ref: actor_id.clone(),
            project_id: desc.project_id.clone(),
            occurred_at: Instant::Seconds(b.timestamp.div_euclid(1000)),
            payload: [("build_status".to_string(), s.to_string()), ("build_number".to_string(), b.number.to_string())]
                .into(),
        })
        .collect();
    events.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    events.dedup_by(|a, b| a.event_id == b.event_id);

    let actors = if events.is_empty() {
        Vec::new()
    } else {
        vec![ActorRecord {
            actor_id,
            display_name: format!("Jenkins {}", desc.project_id),
            email: String::new(),
            username: String::new(),
            source_system: SourceSystem::Jenkins,
        }]
    };
    Ok(PartialTables { actors, events, ..Default::default() })
}

//! Synthetic cohorts with exact ground truth.
//!
//! [`generate_cohort`] simulates every team's repository and service activity
//! from a seeded [`CohortSpec`]. The result can be materialised as real bare
//! git repositories, recorded GitLab/Jenkins responses and a marks file
//! ([`Cohort::materialize`]), or turned straight into the raw dataset the
//! extractors would produce ([`Cohort::dataset`]).

mod emit;
mod history;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anonymize::AnonymizationPolicy;
use crate::cli::PipelineConfig;
use crate::extract::{
    extract_gitlab, extract_jenkins, git_actor_id, gitlab_actor_id, jenkins_actor_id, marks_actor_id, merge_sources,
    parse_marks, Auth, Fetcher, PartialTables, RetryPolicy, SourceDescriptor, SourceKind,
};
use crate::model::{ActorRecord, CohortDataset, CommitRecord, Instant, Measure, SourceSystem};

pub use emit::{gitlab_locator, jenkins_locator, rfc3339, Fixtures};
pub use history::{CommitKind, Identity, Person, TeamHistory};

/// 2023-10-02, a Monday.
pub const COURSE_START: i64 = 1_696_204_800;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("cohort spec: {0}")]
    Spec(String),
    #[error("writing cohort: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing repository: {0}")]
    Git(#[from] git2::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarksDistribution {
    pub mean: f64,
    pub stddev: f64,
}

impl Default for MarksDistribution {
    fn default() -> Self {
        Self { mean: 65.0, stddev: 12.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub seed: u64,
    pub teams: usize,
    pub members_per_team: usize,
    pub days: u32,
    pub commits_per_member_per_day: f64,
    #[serde(default)]
    pub duplicate_identity_rate: f64,
    #[serde(default)]
    pub direct_commit_injections: usize,
    #[serde(default)]
    pub abandoned_branch_injections: usize,
    #[serde(default)]
    pub marks: MarksDistribution,
    /// per-student assessments
    #[serde(default = "default_assessments")]
    pub assessments: Vec<String>,
    /// per-team assessments
    #[serde(default)]
    pub team_assessments: Vec<String>,
    #[serde(default = "default_issues")]
    pub issues_per_team: usize,
}

fn default_assessments() -> Vec<String> {
    vec!["cw1".into(), "cw2".into()]
}

fn default_issues() -> usize {
    3
}

impl CohortSpec {
    /// Five teams of four over thirty days at 1.5 commits per member-day.
    pub fn reference(seed: u64) -> Self {
        Self {
            seed,
            teams: 5,
            members_per_team: 4,
            days: 30,
            commits_per_member_per_day: 1.5,
            duplicate_identity_rate: 0.25,
            direct_commit_injections: 6,
            abandoned_branch_injections: 4,
            marks: MarksDistribution::default(),
            assessments: default_assessments(),
            team_assessments: Vec::new(),
            issues_per_team: default_issues(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Spec(m.into()));
        if !(0.0..=1.0).contains(&self.duplicate_identity_rate) {
            return bad("duplicate_identity_rate must be in [0,1]");
        }
        if !(self.commits_per_member_per_day >= 0.0 && self.commits_per_member_per_day.is_finite()) {
            return bad("commits_per_member_per_day must be a finite non-negative number");
        }
        if !(self.marks.stddev >= 0.0 && self.marks.stddev.is_finite() && self.marks.mean.is_finite()) {
            return bad("marks distribution must be finite with stddev >= 0");
        }
        if self.teams > 0 && self.members_per_team > 0 && self.days == 0 {
            return bad("days must be at least 1");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: Self = toml::from_str(text).map_err(|e| SynthError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueMark {
    pub subject: String,
    pub assessment: String,
    pub value: f64,
}

/// Facts about a generated cohort that hold exactly of its dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// students; CI service identities are counted separately
    pub true_person_count: usize,
    pub service_actor_count: usize,
    pub injected_direct_shas: BTreeSet<String>,
    /// (team_id, branch)
    pub injected_abandoned_branches: BTreeSet<(String, String)>,
    /// username -> commits authored, merges and squashes included
    pub per_member_commit_counts: BTreeMap<String, u64>,
    /// team_id -> member usernames
    pub team_members: BTreeMap<String, Vec<String>>,
    pub total_commits: usize,
    /// commits drawn from the per-member-day Poisson process; merges, root
    /// commits and injections come on top
    pub work_commits: usize,
    /// team_id -> statuses of completed builds in build order
    pub build_statuses: BTreeMap<String, Vec<String>>,
    pub true_marks: Vec<TrueMark>,
    /// every name, email, username and raw actor id the generator emitted
    pub known_identifiers: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub spec: CohortSpec,
    pub people: Vec<Person>,
    pub histories: Vec<TeamHistory>,
    pub fixtures: Fixtures,
    pub marks_csv: String,
    pub truth: GroundTruth,
}

const FIRST: [&str; 16] = [
    "Quinn", "Zara", "Xavier", "Yuki", "Wren", "Juno", "Koji", "Vikram", "Zygmunt", "Oksana", "Priya", "Tomasz",
    "Rukmini", "Yusuf", "Lorcan", "Svetlana",
];
const LAST: [&str; 13] = [
    "Zephyrine", "Quillfeather", "Vasquez", "Okonkwo", "Yilmaz", "Kowalczyk", "Hvistendahl", "Nakamura",
    "Przybylski", "Oyelowo", "Thorvaldsen", "Murphy", "Wojcik",
];

fn person(p: usize, team: usize, dup: bool) -> Person {
    let first = FIRST[p % FIRST.len()];
    let last = LAST[(p / FIRST.len() + p) % LAST.len()];
    let name = format!("{first} {last}");
    let email = format!("{}.{}{p}@students.example.ac.uk", first.to_lowercase(), last.to_lowercase());
    let device = dup.then(|| Identity { name: name.to_lowercase(), email: email.to_uppercase() });
    Person {
        team,
        gitlab_id: 1001 + p as u64,
        username: format!("{}_{}{p:02}", first.to_lowercase(), &last.to_lowercase()[..4]),
        name,
        email,
        device,
    }
}

pub fn team_id(team: usize) -> String {
    format!("team-{:02}", team + 1)
}

pub fn course_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 10, 2).expect("valid date")
}

/// Simulate a cohort. Deterministic in `spec`.
pub fn generate_cohort(spec: &CohortSpec) -> Cohort {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let members = if spec.teams == 0 { 0 } else { spec.members_per_team };
    let mut people = Vec::new();
    for t in 0..spec.teams {
        for j in 0..members {
            let dup = rng.random_bool(spec.duplicate_identity_rate);
            people.push(person(t * members + j, t, dup));
        }
    }

    let mut histories = Vec::new();
    let mut fixtures = Fixtures::default();
    let mut ids = history::IdCounters::default();
    if members > 0 {
        for t in 0..spec.teams {
            let team_members: Vec<usize> = (t * members..(t + 1) * members).collect();
            let (h, next) = history::simulate(spec, t, team_members, &people, COURSE_START, ids, &mut rng);
            ids = next;
            emit::emit_team(&h, &people, &mut fixtures);
            histories.push(h);
        }
    }

    let normal = Normal::new(spec.marks.mean, spec.marks.stddev).expect("validated distribution");
    let draw = |rng: &mut ChaCha20Rng| normal.sample(rng).round().clamp(0.0, 100.0);
    let mut marks = Vec::new();
    for a in &spec.assessments {
        for p in &people {
            marks.push((p.username.clone(), a.clone(), draw(&mut rng)));
        }
    }
    for a in &spec.team_assessments {
        for h in &histories {
            marks.push((team_id(h.team), a.clone(), draw(&mut rng)));
        }
    }

    let truth = ground_truth(&people, &histories, &marks);
    Cohort { spec: spec.clone(), people, histories, fixtures, marks_csv: emit::marks_csv(&marks), truth }
}

fn ground_truth(people: &[Person], histories: &[TeamHistory], marks: &[(String, String, f64)]) -> GroundTruth {
    let mut t = GroundTruth { true_person_count: people.len(), ..Default::default() };
    for p in people {
        t.per_member_commit_counts.insert(p.username.clone(), 0);
        let mut ids = vec![p.primary()];
        ids.extend(p.device.clone());
        for i in ids {
            t.known_identifiers.insert(git_actor_id(&i.name, &i.email));
            t.known_identifiers.insert(i.name);
            t.known_identifiers.insert(i.email);
        }
        t.known_identifiers.insert(p.username.clone());
        t.known_identifiers.insert(gitlab_actor_id(p.gitlab_id));
        t.known_identifiers.insert(marks_actor_id(&p.username));
    }
    for h in histories {
        let team = team_id(h.team);
        t.team_members.insert(team.clone(), h.members.iter().map(|m| people[*m].username.clone()).collect());
        for c in &h.commits {
            *t.per_member_commit_counts.get_mut(&people[c.person].username).expect("member") += 1;
        }
        t.total_commits += h.commits.len();
        t.work_commits += h.commits.iter().filter(|c| c.kind == CommitKind::Work).count();
        t.injected_direct_shas.extend(h.direct_shas.iter().map(|o| o.to_string()));
        t.injected_abandoned_branches.extend(h.abandoned_branches.iter().map(|b| (team.clone(), b.clone())));
        let statuses: Vec<String> =
            h.builds.iter().filter_map(|b| b.result).map(|r| r.to_lowercase()).collect();
        if !statuses.is_empty() {
            t.service_actor_count += 1;
            t.known_identifiers.insert(jenkins_actor_id(&team));
        }
        t.build_statuses.insert(team, statuses);
    }
    t.true_marks = marks
        .iter()
        .map(|(s, a, v)| TrueMark { subject: s.clone(), assessment: a.clone(), value: *v })
        .collect();
    t
}

fn git_part(h: &TeamHistory) -> PartialTables {
    let repo = team_id(h.team);
    let chain = h.main_chain();
    let mut actors: BTreeMap<String, ActorRecord> = BTreeMap::new();
    let commits = h
        .commits
        .iter()
        .map(|c| {
            let id = git_actor_id(&c.author.name, &c.author.email);
            actors.entry(id.clone()).or_insert_with(|| ActorRecord {
                actor_id: id.clone(),
                display_name: c.author.name.clone(),
                email: c.author.email.clone(),
                username: String::new(),
                source_system: SourceSystem::Git,
            });
            CommitRecord {
                sha: c.oid.to_string(),
                repo_id: repo.clone(),
                author_ref: id.clone(),
                committer_ref: id,
                authored_at: Instant::Seconds(c.time),
                message: c.message.clone(),
                parent_shas: c.parents.iter().map(|p| p.to_string()).collect(),
                on_default_first_parent: chain.contains(&c.oid),
                insertions: Some(Measure::Exact(c.insertions as f64)),
                deletions: Some(Measure::Exact(0.0)),
            }
        })
        .collect();
    PartialTables { actors: actors.into_values().collect(), commits, ..Default::default() }
}

impl Cohort {
    /// Sources as written by [`Cohort::materialize`], with locators relative to its root.
    pub fn sources(&self) -> Vec<SourceDescriptor> {
        let mut out = vec![SourceDescriptor::new(SourceKind::FixtureDir, "fixtures", "")];
        for h in &self.histories {
            let id = team_id(h.team);
            out.push(SourceDescriptor::new(SourceKind::GitRepo, format!("repos/{id}.git"), id.clone()));
            out.push(SourceDescriptor::new(SourceKind::GitlabProject, gitlab_locator(h.team), id.clone()));
            out.push(SourceDescriptor::new(SourceKind::JenkinsJob, jenkins_locator(h.team), id));
        }
        out.push(SourceDescriptor::new(SourceKind::MarksFile, "marks.csv", ""));
        out
    }

    /// The raw dataset extraction of the materialised cohort yields.
    pub fn dataset(&self) -> CohortDataset {
        let fetcher = Fetcher { transport: &self.fixtures, retry: RetryPolicy::default(), auth: Auth::None, project: String::new() };
        let mut parts = Vec::new();
        for h in &self.histories {
            let id = team_id(h.team);
            parts.push(git_part(h));
            let gl = SourceDescriptor::new(SourceKind::GitlabProject, gitlab_locator(h.team), id.clone());
            parts.push(extract_gitlab(&gl, &fetcher).expect("generated fixtures are complete"));
            let jk = SourceDescriptor::new(SourceKind::JenkinsJob, jenkins_locator(h.team), id);
            parts.push(extract_jenkins(&jk, &fetcher).expect("generated fixtures are complete"));
        }
        let marks = parse_marks(self.marks_csv.as_bytes()).expect("generated marks are valid");
        parts.push(PartialTables { marks, ..Default::default() });
        let descriptors: Vec<String> = self.sources().iter().map(SourceDescriptor::describe).collect();
        merge_sources(parts, &descriptors).expect("generated parts are consistent")
    }

    /// Write repositories, recorded responses, the marks file, a pipeline
    /// config and the reference policy under `root`. Returns the config path.
    pub fn materialize(&self, root: &Path) -> Result<PathBuf, SynthError> {
        std::fs::create_dir_all(root.join("repos"))?;
        for h in &self.histories {
            emit::write_repo(h, &root.join("repos").join(format!("{}.git", team_id(h.team))))?;
        }
        self.fixtures.write(&root.join("fixtures"))?;
        std::fs::write(root.join("marks.csv"), &self.marks_csv)?;
        std::fs::write(root.join("policy.toml"), AnonymizationPolicy::reference().to_toml())?;
        let config = PipelineConfig::new(self.sources(), "policy.toml", "out");
        let path = root.join("pipeline.toml");
        std::fs::write(&path, config.to_toml())?;
        Ok(path)
    }
}

/// Generate a cohort's raw dataset and its ground truth.
pub fn generate(spec: &CohortSpec) -> (CohortDataset, GroundTruth) {
    let cohort = generate_cohort(spec);
    (cohort.dataset(), cohort.truth)
}

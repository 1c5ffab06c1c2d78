//! Day-by-day simulation of one team's repository and GitLab/Jenkins activity.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use git2::{ObjectType, Oid};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};

use super::CohortSpec;

pub const DAY: i64 = 86_400;
const HOUR: i64 = 3_600;
const MINUTE: i64 = 60;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub name: String,
    pub email: String,
}

#[derive(Debug, Clone)]
pub struct Person {
    pub team: usize,
    pub gitlab_id: u64,
    pub username: String,
    pub name: String,
    pub email: String,
    /// second machine with a differently configured identity
    pub device: Option<Identity>,
}

impl Person {
    pub fn primary(&self) -> Identity {
        Identity { name: self.name.clone(), email: self.email.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitKind {
    Root,
    Work,
    Direct,
    Merge,
    Squash,
}

#[derive(Debug, Clone)]
pub struct SimCommit {
    pub oid: Oid,
    pub parents: Vec<Oid>,
    pub author: Identity,
    pub person: usize,
    pub time: i64,
    pub message: String,
    pub insertions: u64,
    pub kind: CommitKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrState {
    Opened,
    Merged,
    Closed,
}

#[derive(Debug, Clone)]
pub struct SimMr {
    pub id: u64,
    pub iid: u64,
    pub author: usize,
    pub state: MrState,
    pub created_at: i64,
    pub ended: Option<(i64, usize)>,
    pub source_branch: String,
    pub merge_commit_sha: Option<Oid>,
    pub squash_commit_sha: Option<Oid>,
}

#[derive(Debug, Clone)]
pub struct SimIssue {
    pub id: u64,
    pub iid: u64,
    pub author: usize,
    pub created_at: i64,
    pub closed: Option<(i64, usize)>,
}

#[derive(Debug, Clone)]
pub struct SimNote {
    pub id: u64,
    /// ("merge_requests" | "issues", iid)
    pub on: (&'static str, u64),
    pub author: usize,
    pub at: i64,
    pub system: bool,
}

#[derive(Debug, Clone)]
pub struct SimPipeline {
    pub id: u64,
    pub user: usize,
    pub at: i64,
    pub status: &'static str,
    pub git_ref: String,
    pub sha: Oid,
}

#[derive(Debug, Clone)]
pub struct SimBuild {
    pub number: u64,
    /// Jenkins result; None while running
    pub result: Option<&'static str>,
    pub timestamp_ms: i64,
}

/// Everything one team produced.
#[derive(Debug, Clone, Default)]
pub struct TeamHistory {
    pub team: usize,
    pub members: Vec<usize>,
    /// loose objects in write order
    pub objects: Vec<(ObjectType, Vec<u8>, Oid)>,
    pub commits: Vec<SimCommit>,
    pub refs: BTreeMap<String, Oid>,
    pub mrs: Vec<SimMr>,
    pub issues: Vec<SimIssue>,
    pub notes: Vec<SimNote>,
    pub pipelines: Vec<SimPipeline>,
    pub builds: Vec<SimBuild>,
    pub direct_shas: Vec<Oid>,
    pub abandoned_branches: Vec<String>,
}

impl TeamHistory {
    /// Commits on the first-parent chain of main.
    pub fn main_chain(&self) -> std::collections::HashSet<Oid> {
        let by_oid: std::collections::HashMap<Oid, &SimCommit> = self.commits.iter().map(|c| (c.oid, c)).collect();
        let mut out = std::collections::HashSet::new();
        let mut cursor = self.refs.get("refs/heads/main").copied();
        while let Some(oid) = cursor {
            out.insert(oid);
            cursor = by_oid.get(&oid).and_then(|c| c.parents.first().copied());
        }
        out
    }
}

type Files = BTreeMap<String, Vec<String>>;

fn file_bytes(lines: &[String]) -> Vec<u8> {
    let mut s = String::new();
    for l in lines {
        s.push_str(l);
        s.push('\n');
    }
    s.into_bytes()
}

#[derive(Debug, Clone)]
struct Branch {
    name: String,
    head: Oid,
    files: Files,
    commits: usize,
    target: usize,
    mr_scheduled: bool,
}

enum Action {
    Work(usize),
    OpenMr(usize),
    FinishMr(usize),
    Direct(usize),
    Spike(usize),
}

struct Sim<'a> {
    h: TeamHistory,
    people: &'a [Person],
    rng: &'a mut ChaCha20Rng,
    seen: std::collections::HashSet<Oid>,
    main_head: Oid,
    main_files: Files,
    branches: BTreeMap<usize, Branch>,
    mr_branches: Vec<Branch>,
    queue: BinaryHeap<Reverse<(i64, u64)>>,
    actions: Vec<Action>,
    feature_counter: usize,
    ids: IdCounters,
}

/// Ids unique across the whole cohort.
#[derive(Debug, Clone, Default)]
pub struct IdCounters {
    pub mr: u64,
    pub issue: u64,
    pub note: u64,
    pub pipeline: u64,
}

impl Sim<'_> {
    fn object(&mut self, kind: ObjectType, bytes: Vec<u8>) -> Oid {
        let oid = Oid::hash_object(kind, &bytes).expect("hashing in memory");
        if self.seen.insert(oid) {
            self.h.objects.push((kind, bytes, oid));
        }
        oid
    }

    fn tree(&mut self, files: &Files) -> Oid {
        let mut bytes = Vec::new();
        for (name, lines) in files {
            let blob = self.object(ObjectType::Blob, file_bytes(lines));
            bytes.extend_from_slice(format!("100644 {name}\0").as_bytes());
            bytes.extend_from_slice(blob.as_bytes());
        }
        self.object(ObjectType::Tree, bytes)
    }

    #[allow(clippy::too_many_arguments)]
    fn commit(
        &mut self,
        files: &Files,
        parents: Vec<Oid>,
        person: usize,
        author: Identity,
        time: i64,
        message: String,
        insertions: u64,
        kind: CommitKind,
    ) -> Oid {
        let tree = self.tree(files);
        let mut text = format!("tree {tree}\n");
        for p in &parents {
            text.push_str(&format!("parent {p}\n"));
        }
        let sig = format!("{} <{}> {time} +0000", author.name, author.email);
        text.push_str(&format!("author {sig}\ncommitter {sig}\n\n{message}\n"));
        let oid = self.object(ObjectType::Commit, text.into_bytes());
        self.h.commits.push(SimCommit { oid, parents, author, person, time, message: format!("{message}\n"), insertions, kind });
        oid
    }

    fn identity(&mut self, person: usize) -> Identity {
        let p = &self.people[person];
        match &p.device {
            Some(d) if self.rng.random_bool(0.3) => d.clone(),
            _ => p.primary(),
        }
    }

    fn schedule(&mut self, at: i64, action: Action) {
        self.queue.push(Reverse((at, self.actions.len() as u64)));
        self.actions.push(action);
    }

    fn other_member(&mut self, person: usize) -> usize {
        let others: Vec<usize> = self.h.members.iter().copied().filter(|m| *m != person).collect();
        others.choose(self.rng).copied().unwrap_or(person)
    }

    fn new_branch(&mut self, prefix: &str) -> Branch {
        self.feature_counter += 1;
        Branch {
            name: format!("{prefix}-{}", self.feature_counter),
            head: self.main_head,
            files: self.main_files.clone(),
            commits: 0,
            target: self.rng.random_range(4..=12),
            mr_scheduled: false,
        }
    }

    fn branch_commit(&mut self, branch: &mut Branch, person: usize, at: i64) {
        let file = format!("{}.txt", branch.name);
        branch.commits += 1;
        branch.files.entry(file).or_default().push(format!("step {}", branch.commits));
        let author = self.identity(person);
        let msg = format!("{}: step {}", branch.name, branch.commits);
        branch.head = self.commit(&branch.files.clone(), vec![branch.head], person, author, at, msg, 1, CommitKind::Work);
    }

    fn open_mr(&mut self, branch: Branch, person: usize, at: i64) -> usize {
        self.ids.mr += 1;
        let iid = self.h.mrs.len() as u64 + 1;
        self.h.mrs.push(SimMr {
            id: self.ids.mr,
            iid,
            author: person,
            state: MrState::Opened,
            created_at: at,
            ended: None,
            source_branch: branch.name.clone(),
            merge_commit_sha: None,
            squash_commit_sha: None,
        });
        self.ids.pipeline += 1;
        let status = if self.rng.random_bool(0.8) { "success" } else { "failed" };
        self.h.pipelines.push(SimPipeline {
            id: self.ids.pipeline,
            user: person,
            at: at + 5 * MINUTE,
            status,
            git_ref: branch.name.clone(),
            sha: branch.head,
        });
        if self.rng.random_bool(0.5) {
            self.ids.note += 1;
            let reviewer = self.other_member(person);
            self.h.notes.push(SimNote {
                id: self.ids.note,
                on: ("merge_requests", iid),
                author: reviewer,
                at: at + 20 * MINUTE,
                system: false,
            });
        }
        self.mr_branches.push(branch);
        self.h.mrs.len() - 1
    }

    fn finish_mr(&mut self, idx: usize, at: i64) {
        let author = self.h.mrs[idx].author;
        let branch = self.mr_branches[idx].clone();
        if self.rng.random_bool(0.1) {
            self.h.mrs[idx].state = MrState::Closed;
            self.h.mrs[idx].ended = Some((at, author));
        } else {
            let merger = self.other_member(author);
            let file = format!("{}.txt", branch.name);
            let lines = branch.files.get(&file).cloned().unwrap_or_default();
            let n = lines.len() as u64;
            self.main_files.insert(file, lines);
            let files = self.main_files.clone();
            let oid = if self.rng.random_bool(0.3) {
                let who = self.identity(author);
                let msg = format!("{} (squashed)", branch.name);
                let oid = self.commit(&files, vec![self.main_head], author, who, at, msg, n, CommitKind::Squash);
                self.h.mrs[idx].squash_commit_sha = Some(oid);
                oid
            } else {
                let who = self.identity(merger);
                let msg = format!("Merge branch '{}' into 'main'", branch.name);
                let parents = vec![self.main_head, branch.head];
                let oid = self.commit(&files, parents, merger, who, at, msg, n, CommitKind::Merge);
                self.h.mrs[idx].merge_commit_sha = Some(oid);
                oid
            };
            self.main_head = oid;
            self.h.mrs[idx].state = MrState::Merged;
            self.h.mrs[idx].ended = Some((at, merger));

            let result = *["SUCCESS", "SUCCESS", "SUCCESS", "FAILURE", "UNSTABLE", "ABORTED"].choose(self.rng).unwrap();
            self.h.builds.push(SimBuild {
                number: self.h.builds.len() as u64 + 1,
                result: Some(result),
                timestamp_ms: (at + 5 * MINUTE) * 1000 + self.rng.random_range(0..1000),
            });
        }
        self.ids.note += 1;
        let iid = self.h.mrs[idx].iid;
        self.h.notes.push(SimNote { id: self.ids.note, on: ("merge_requests", iid), author, at, system: true });
    }

    fn run(&mut self) {
        while let Some(Reverse((at, seq))) = self.queue.pop() {
            match self.actions[seq as usize] {
                Action::Work(p) => {
                    let mut b = match self.branches.remove(&p) {
                        Some(b) => b,
                        None => self.new_branch("feature"),
                    };
                    self.branch_commit(&mut b, p, at);
                    if b.commits >= b.target && !b.mr_scheduled {
                        b.mr_scheduled = true;
                        self.schedule(at + 10 * MINUTE, Action::OpenMr(p));
                    }
                    self.branches.insert(p, b);
                }
                Action::OpenMr(p) => {
                    let b = self.branches.remove(&p).expect("scheduled after a commit");
                    let idx = self.open_mr(b, p, at);
                    let wait = self.rng.random_range(30 * MINUTE..3 * HOUR);
                    self.schedule(at + wait, Action::FinishMr(idx));
                }
                Action::FinishMr(idx) => self.finish_mr(idx, at),
                Action::Direct(p) => {
                    self.main_files.entry("direct.txt".into()).or_default().push(format!("hotfix at {at}"));
                    let files = self.main_files.clone();
                    let who = self.identity(p);
                    let oid =
                        self.commit(&files, vec![self.main_head], p, who, at, "hotfix".into(), 1, CommitKind::Direct);
                    self.main_head = oid;
                    self.h.direct_shas.push(oid);
                }
                Action::Spike(p) => {
                    let mut b = self.new_branch("spike");
                    self.branch_commit(&mut b, p, at);
                    self.branch_commit(&mut b, p, at + 10 * MINUTE);
                    self.h.abandoned_branches.push(b.name.clone());
                    self.h.refs.insert(format!("refs/heads/{}", b.name), b.head);
                    self.open_mr(b, p, at + 20 * MINUTE);
                }
            }
        }
        for b in self.branches.values().chain(&self.mr_branches) {
            self.h.refs.insert(format!("refs/heads/{}", b.name), b.head);
        }
        self.h.refs.insert("refs/heads/main".into(), self.main_head);
    }
}

fn working_time(rng: &mut ChaCha20Rng, start: i64, days: u32) -> i64 {
    let day = rng.random_range(0..days.max(1)) as i64;
    start + day * DAY + 9 * HOUR + rng.random_range(0..12 * HOUR)
}

/// Share of `total` injected into team `t` of `teams`.
pub fn share(total: usize, teams: usize, t: usize) -> usize {
    total / teams + usize::from(t < total % teams)
}

pub fn simulate(
    spec: &CohortSpec,
    team: usize,
    members: Vec<usize>,
    people: &[Person],
    start: i64,
    ids: IdCounters,
    rng: &mut ChaCha20Rng,
) -> (TeamHistory, IdCounters) {
    let mut sim = Sim {
        h: TeamHistory { team, members: members.clone(), ..Default::default() },
        people,
        rng,
        seen: Default::default(),
        main_head: Oid::zero(),
        main_files: BTreeMap::new(),
        branches: BTreeMap::new(),
        mr_branches: Vec::new(),
        queue: BinaryHeap::new(),
        actions: Vec::new(),
        feature_counter: 0,
        ids,
    };

    let founder = members[0];
    sim.main_files.insert("README.md".into(), vec![format!("# team-{:02}", team + 1)]);
    let files = sim.main_files.clone();
    let who = people[founder].primary();
    sim.main_head = sim.commit(&files, vec![], founder, who, start + 8 * HOUR, "Initial commit".into(), 1, CommitKind::Root);

    let poisson = Poisson::new(spec.commits_per_member_per_day.max(1e-9)).expect("positive rate");
    for day in 0..spec.days as i64 {
        for &m in &members {
            let n = if spec.commits_per_member_per_day > 0.0 { poisson.sample(sim.rng) as usize } else { 0 };
            let mut times: Vec<i64> =
                (0..n).map(|_| start + day * DAY + 9 * HOUR + sim.rng.random_range(0..12 * HOUR)).collect();
            times.sort_unstable();
            for t in times {
                sim.schedule(t, Action::Work(m));
            }
        }
    }
    let teams = spec.teams;
    for _ in 0..share(spec.direct_commit_injections, teams, team) {
        let (at, m) = (working_time(sim.rng, start, spec.days), *members.choose(sim.rng).unwrap());
        sim.schedule(at, Action::Direct(m));
    }
    for _ in 0..share(spec.abandoned_branch_injections, teams, team) {
        let (at, m) = (working_time(sim.rng, start, spec.days), *members.choose(sim.rng).unwrap());
        sim.schedule(at, Action::Spike(m));
    }
    sim.run();

    for iid in 1..=spec.issues_per_team as u64 {
        sim.ids.issue += 1;
        let author = *members.choose(sim.rng).unwrap();
        let created_at = working_time(sim.rng, start, spec.days);
        let closed = sim.rng.random_bool(0.7).then(|| {
            let closer = *members.choose(sim.rng).unwrap();
            (created_at + sim.rng.random_range(DAY..3 * DAY), closer)
        });
        sim.h.issues.push(SimIssue { id: sim.ids.issue, iid, author, created_at, closed });
        if sim.rng.random_bool(0.5) {
            sim.ids.note += 1;
            let note = SimNote {
                id: sim.ids.note,
                on: ("issues", iid),
                author: *members.choose(sim.rng).unwrap(),
                at: created_at + HOUR,
                system: false,
            };
            sim.h.notes.push(note);
        }
    }
    // a build still running when the data was pulled
    let end = start + spec.days as i64 * DAY;
    sim.h.builds.push(SimBuild { number: sim.h.builds.len() as u64 + 1, result: None, timestamp_ms: end * 1000 });

    (sim.h, sim.ids)
}

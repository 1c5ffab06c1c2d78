//! Independent reference implementations and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glla::model::{ActorRecord, SourceSystem};
use rand::Rng;

pub const KEY_HEX: &str = "5ad1c0ffee5ad1c0ffee5ad1c0ffee5ad1c0ffee5ad1c0ffee5ad1c0ffee5ad1";

/// Partition by breadth-first search over the full pairwise link matrix.
pub fn closure_oracle(actors: &[ActorRecord]) -> BTreeSet<BTreeSet<String>> {
    let n = actors.len();
    let linked = |a: &ActorRecord, b: &ActorRecord| {
        let (ea, eb) = (a.email.trim().to_lowercase(), b.email.trim().to_lowercase());
        (!ea.is_empty() && ea == eb) || (!a.username.is_empty() && a.username == b.username)
    };
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            adj[i][j] = i == j || linked(&actors[i], &actors[j]);
        }
    }
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cluster = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            cluster.insert(actors[i].actor_id.clone());
            for j in 0..n {
                if adj[i][j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        out.insert(cluster);
    }
    out
}

/// Actors drawn from small pools of emails and usernames so that links are common.
pub fn random_actors(rng: &mut impl Rng, n: usize) -> Vec<ActorRecord> {
    let emails = n / 3 + 1;
    let usernames = n / 3 + 1;
    (0..n)
        .map(|i| {
            let email = match rng.random_range(0..4) {
                0 => String::new(),
                1 => format!("  P{}@Example.invalid ", rng.random_range(0..emails)),
                _ => format!("p{}@example.invalid", rng.random_range(0..emails)),
            };
            let username =
                if rng.random_bool(0.4) { String::new() } else { format!("u{}", rng.random_range(0..usernames)) };
            ActorRecord {
                actor_id: format!("a{i:04}"),
                display_name: format!("Name {}", rng.random_range(0..5)),
                email,
                username,
                source_system: SourceSystem::Git,
            }
        })
        .collect()
}

/// Normalised Shannon entropy, written out term by term.
pub fn entropy_oracle(counts: &[u64]) -> f64 {
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    if total == 0 || n <= 1 {
        return 0.0;
    }
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    h / (n as f64).log2()
}

/// cov(x, y) / (sd(x) sd(y)) from raw sums.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Rank of each value by counting smaller and equal values; ties share their mean rank.
pub fn rank_oracle(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_oracle(&rank_oracle(x), &rank_oracle(y))
}

pub fn glla(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glla"))
        .args(args)
        .current_dir(dir)
        .env("GLLA_KEY", KEY_HEX)
        .output()
        .expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Write a cohort spec and materialise it with `glla synth --fixtures`. Returns the pipeline config.
pub fn synth_cohort(dir: &Path, spec: &glla::synthgen::CohortSpec) -> PathBuf {
    std::fs::write(dir.join("spec.toml"), spec.to_toml()).unwrap();
    let o = glla(&["synth", "--config", "spec.toml", "--fixtures"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("pipeline.toml")
}

/// The reference cohort with marks tight enough to pass the reference policy.
pub fn releasable_spec(seed: u64) -> glla::synthgen::CohortSpec {
    let mut spec = glla::synthgen::CohortSpec::reference(seed);
    spec.marks.stddev = 1.5;
    spec
}

/// The reference cohort with widely spread marks: some mark bins hold fewer than three students.
pub fn unreleasable_spec(seed: u64) -> glla::synthgen::CohortSpec {
    let mut spec = glla::synthgen::CohortSpec::reference(seed);
    spec.marks.stddev = 15.0;
    spec
}

pub fn decrypt_file(path: &Path) -> glla::model::CohortDataset {
    let key = glla::vault::VaultKey::from_hex(KEY_HEX).unwrap();
    glla::vault::open_dataset(&std::fs::read(path).unwrap(), &key).unwrap()
}

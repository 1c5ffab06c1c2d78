//! Merge actor records from git, GitLab and the marks file into people.
//!
//! cargo run --example resolve_identities

use glla::identity::{build_clusters, resolve};
use glla::synthgen::{generate, CohortSpec};

fn main() {
    let (raw, truth) = generate(&CohortSpec { teams: 2, days: 6, duplicate_identity_rate: 0.5, ..CohortSpec::reference(12) });
    let map = build_clusters(&raw.actors, &[]).unwrap();
    for (canonical, members) in map.clusters.iter().filter(|(_, m)| m.len() > 1).take(4) {
        println!("{canonical}");
        for m in members {
            let a = raw.actor(m).unwrap();
            println!("    {m:<28} {:<10?} {:<28} {}", a.source_system, a.email, a.username);
        }
    }
    let (resolved, _) = resolve(&raw, &[]).unwrap();
    println!(
        "\n{} raw actors -> {} resolved ({} students, {} CI service accounts)",
        raw.actors.len(),
        resolved.actors.len(),
        truth.true_person_count,
        truth.service_actor_count
    );
}

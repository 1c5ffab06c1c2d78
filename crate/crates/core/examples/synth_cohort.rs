//! Generate the reference synthetic cohort and print what it contains.
//!
//! cargo run --example synth_cohort [seed]

use glla::synthgen::{generate, CohortSpec};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2023);
    let (ds, truth) = generate(&CohortSpec::reference(seed));

    for (table, n) in ds.table_sizes() {
        println!("{table:<20} {n:>6}");
    }
    println!();
    println!("people               {:>6}", truth.true_person_count);
    println!("service actors       {:>6}", truth.service_actor_count);
    println!("commits              {:>6}", truth.total_commits);
    println!("direct commits       {:>6}", truth.injected_direct_shas.len());
    println!("abandoned branches   {:>6}", truth.injected_abandoned_branches.len());
    for (team, members) in &truth.team_members {
        let counts: Vec<u64> = members.iter().map(|m| truth.per_member_commit_counts[m]).collect();
        println!("{team} commits per member {counts:?}");
    }
}

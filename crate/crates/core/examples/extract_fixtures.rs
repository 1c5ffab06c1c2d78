//! Extract GitLab, Jenkins, git and marks sources from a materialised cohort,
//! reading recorded API responses instead of the network.
//!
//! cargo run --example extract_fixtures

use glla::cli::PipelineConfig;
use glla::extract::{extract_all, RetryPolicy};
use glla::model::EventKind;
use glla::synthgen::{generate_cohort, CohortSpec};

fn main() {
    let cohort = generate_cohort(&CohortSpec { teams: 2, days: 10, ..CohortSpec::reference(5) });
    let dir = tempfile::tempdir().unwrap();
    let config = PipelineConfig::load(&cohort.materialize(dir.path()).unwrap()).unwrap();
    for s in &config.sources {
        println!("source {}", s.describe());
    }

    let ds = extract_all(&config.sources, RetryPolicy::default(), config.parallelism).expect("fixtures are complete");
    println!();
    for (table, n) in ds.table_sizes() {
        println!("{table:<20} {n:>6}");
    }
    let mut kinds = std::collections::BTreeMap::<EventKind, usize>::new();
    for e in &ds.events {
        *kinds.entry(e.kind).or_default() += 1;
    }
    println!();
    for (k, n) in kinds {
        println!("{k:<20} {n:>6}");
    }
    assert_eq!(ds, cohort.dataset());
    println!("\ncontent hash {}", ds.manifest.content_hash);
}

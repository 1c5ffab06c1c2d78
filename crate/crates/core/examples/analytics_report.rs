//! Compute the analytics report on an anonymised synthetic cohort.
//!
//! cargo run --example analytics_report [day|week]

use glla::analytics::{analyze, render_table, AnalysisOptions};
use glla::anonymize::{apply_policy, AnonymizationPolicy};
use glla::identity::resolve;
use glla::model::Granularity;
use glla::synthgen::{generate, CohortSpec};

fn main() {
    let granularity = match std::env::args().nth(1).as_deref() {
        Some("day") | None => Granularity::Day,
        Some("week") => Granularity::Week,
        Some(other) => panic!("unknown granularity {other}"),
    };
    let mut spec = CohortSpec::reference(11);
    spec.marks.stddev = 1.5;
    let (raw, _) = generate(&spec);
    let (resolved, _) = resolve(&raw, &[]).unwrap();
    let mut policy = AnonymizationPolicy::reference();
    policy.generalize.retain(|g| g.field != "marks.value");
    policy.quasi_identifiers = vec!["marks.assessment_id".into()];
    let anon = apply_policy(&resolved, &policy, &[9; 32], 2).unwrap().dataset;
    let report = analyze(&anon, AnalysisOptions { granularity }).unwrap();
    print!("{}", render_table(&report));
}

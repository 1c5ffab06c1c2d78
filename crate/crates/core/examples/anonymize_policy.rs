//! Apply the reference anonymisation policy and print the risk and utility reports.
//!
//! cargo run --example anonymize_policy [policy.toml]

use glla::anonymize::{apply_policy, AnonymizationPolicy, AnonymizeError};
use glla::identity::resolve;
use glla::synthgen::{generate, CohortSpec};

fn main() {
    let policy = match std::env::args().nth(1) {
        Some(p) => AnonymizationPolicy::load(p.as_ref()).expect("valid policy"),
        None => AnonymizationPolicy::reference(),
    };
    println!("{}", policy.to_toml());

    for stddev in [1.5, 15.0] {
        let mut spec = CohortSpec::reference(7);
        spec.marks.stddev = stddev;
        let (raw, _) = generate(&spec);
        let (resolved, _) = resolve(&raw, &[]).unwrap();
        print!("marks sd {stddev:>4}: ");
        match apply_policy(&resolved, &policy, &[0x42; 32], 4) {
            Ok(a) => {
                println!("released, achieved k {}, prosecutor risk {:.3}", a.risk.achieved_k, a.risk.prosecutor_risk);
                for (field, loss) in &a.utility.per_field_information_loss {
                    println!("    {field:<32} information loss {loss:.3}");
                }
            }
            Err(AnonymizeError::Threshold { report, .. }) => {
                println!("refused, achieved k {} with group sizes {:?}", report.achieved_k, report.group_histogram);
            }
            Err(e) => println!("error: {e}"),
        }
    }
}

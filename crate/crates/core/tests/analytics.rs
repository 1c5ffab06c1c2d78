mod common;

use std::collections::BTreeMap;

use glla::analytics::{
    activity_timeline, analyze, commit_entropy, correlate, correlate_pairs, normalized_entropy, AnalysisOptions, Undefined,
};
use glla::anonymize::{apply_policy, AnonymizationPolicy};
use glla::identity::resolve;
use glla::model::{Granularity, MarkRecord, Measure};
use glla::synthgen::{generate, CohortSpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn entropy_matches_oracle_and_stays_in_bounds(counts in proptest::collection::vec(0u64..50, 1..12)) {
        let h = normalized_entropy(&counts);
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h - common::entropy_oracle(&counts)).abs() < 1e-9);
    }

    #[test]
    fn entropy_is_scale_invariant(counts in proptest::collection::vec(0u64..50, 1..12), k in 1u64..20) {
        let scaled: Vec<u64> = counts.iter().map(|c| c * k).collect();
        prop_assert!((normalized_entropy(&counts) - normalized_entropy(&scaled)).abs() < 1e-12);
    }

    #[test]
    fn entropy_extremes(n in 2usize..10, c in 1u64..100, who in 0usize..10) {
        prop_assert_eq!(normalized_entropy(&vec![c; n]), 1.0);
        let mut single = vec![0; n];
        single[who % n] = c;
        prop_assert_eq!(normalized_entropy(&single), 0.0);
    }

    #[test]
    fn spearman_ignores_monotone_transforms(pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..30)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(base) = correlate_pairs(&x, &y) {
            let tx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
            let ty: Vec<f64> = y.iter().map(|v| (v / 10.0).exp()).collect();
            let t = correlate_pairs(&tx, &ty).unwrap();
            prop_assert!((base.spearman - t.spearman).abs() < 1e-9);
        }
    }

    #[test]
    fn correlations_match_oracle(pairs in proptest::collection::vec((0u8..20, 0u8..20), 2..40)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        match correlate_pairs(&x, &y) {
            Ok(c) => {
                prop_assert!((c.pearson - common::pearson_oracle(&x, &y)).abs() < 1e-9);
                prop_assert!((c.spearman - common::spearman_oracle(&x, &y)).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&c.pearson) && (-1.0..=1.0).contains(&c.spearman));
            }
            Err(Undefined::ZeroVariance) => {
                prop_assert!(x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]));
            }
            Err(e) => prop_assert!(false, "{:?}", e),
        }
    }
}

#[test]
fn worked_entropy_example() {
    assert!((normalized_entropy(&[12, 4, 4, 0]) - 0.685_475_297_227_334_4).abs() < 1e-9);
    assert!((normalized_entropy(&[12, 4, 4, 0]) - 1.370_950_594_454_668_8 / 2.0).abs() < 1e-9);
}

#[test]
fn generalised_marks_pair_on_bin_midpoints() {
    let marks = vec![
        MarkRecord { subject_ref: "a".into(), assessment_id: "cw1".into(), value: Measure::Bin { lo: 40.0, hi: 50.0 } },
        MarkRecord { subject_ref: "b".into(), assessment_id: "cw1".into(), value: Measure::Bin { lo: 60.0, hi: 70.0 } },
        MarkRecord { subject_ref: "c".into(), assessment_id: "cw1".into(), value: Measure::Exact(80.0) },
        MarkRecord { subject_ref: "d".into(), assessment_id: "cw2".into(), value: Measure::Exact(10.0) },
    ];
    let metric = BTreeMap::from([("a".to_string(), 1.0), ("b".to_string(), 2.0), ("c".to_string(), 2.5), ("z".into(), 9.0)]);
    let c = correlate(&metric, &marks, "cw1").unwrap();
    assert_eq!(c.n, 3);
    assert!((c.pearson - common::pearson_oracle(&[1.0, 2.0, 2.5], &[45.0, 65.0, 80.0])).abs() < 1e-12);
    assert_eq!(correlate(&metric, &marks, "cw2").unwrap_err(), Undefined::TooFewPairs);
}

#[test]
fn timeline_totals_equal_member_activity() {
    let (raw, truth) = generate(&CohortSpec { teams: 2, days: 12, ..CohortSpec::reference(21) });
    let (ds, _) = resolve(&raw, &[]).unwrap();
    for t in &ds.teams {
        let timeline = activity_timeline(&ds, t, Granularity::Day);
        let total: u64 = timeline.iter().map(|p| p.count).sum();
        let members: std::collections::BTreeSet<&str> = t.member_refs.iter().map(String::as_str).collect();
        let expected = ds.commits.iter().filter(|c| members.contains(c.author_ref.as_str())).count()
            + ds.events.iter().filter(|e| members.contains(e.actor_ref.as_str())).count();
        assert_eq!(total as usize, expected);
        let weekly: u64 = activity_timeline(&ds, t, Granularity::Week).iter().map(|p| p.count).sum();
        assert_eq!(weekly, total);
        let commits: u64 = truth.team_members[&t.team_id].iter().map(|u| truth.per_member_commit_counts[u]).sum();
        assert!(total >= commits);
    }
}

#[test]
fn entropy_survives_anonymisation() {
    let (raw, _) = generate(&CohortSpec { teams: 3, days: 10, ..CohortSpec::reference(22) });
    let (ds, _) = resolve(&raw, &[]).unwrap();
    let policy = AnonymizationPolicy { k_threshold: 1, ..AnonymizationPolicy::reference() };
    let anon = apply_policy(&ds, &policy, &[1; 32], 1).unwrap().dataset;
    let before: Vec<f64> = ds.teams.iter().map(|t| commit_entropy(t, &ds).unwrap()).collect();
    let report = analyze(&anon, AnalysisOptions::default()).unwrap();
    let after: Vec<f64> = report.per_team_entropy.values().copied().collect();
    assert_eq!(before, after);
    assert!(analyze(&ds, AnalysisOptions::default()).is_err());
}

#[test]
fn reports_are_byte_stable() {
    let (raw, _) = generate(&CohortSpec { teams: 2, days: 8, ..CohortSpec::reference(23) });
    let (ds, _) = resolve(&raw, &[]).unwrap();
    let anon = apply_policy(&ds, &AnonymizationPolicy { k_threshold: 1, ..AnonymizationPolicy::reference() }, &[1; 32], 1)
        .unwrap()
        .dataset;
    let a = serde_json::to_vec(&analyze(&anon, AnalysisOptions::default()).unwrap()).unwrap();
    let b = serde_json::to_vec(&analyze(&anon, AnalysisOptions::default()).unwrap()).unwrap();
    assert_eq!(a, b);
}

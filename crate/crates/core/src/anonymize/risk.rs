use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::model::{CohortDataset, Table};

use super::fields::{common_table, read_tuples, FieldPath};
use super::AnonymizeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub min_group_size: usize,
    pub achieved_k: usize,
    pub prosecutor_risk: f64,
    /// equivalence-class size -> number of classes of that size
    pub group_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub per_field_information_loss: BTreeMap<String, f64>,
}

/// k-anonymity accounting over exact tuples.
pub fn risk_from_tuples<T: Eq + Hash>(tuples: impl IntoIterator<Item = T>) -> Result<RiskReport, AnonymizeError> {
    let mut classes: HashMap<T, usize> = HashMap::new();
    for t in tuples {
        *classes.entry(t).or_default() += 1;
    }
    let min = classes
        .values()
        .copied()
        .min()
        .ok_or_else(|| AnonymizeError::UndefinedRisk("no records".into()))?;
    let mut group_histogram = BTreeMap::new();
    for size in classes.values() {
        *group_histogram.entry(*size).or_default() += 1;
    }
    Ok(RiskReport { min_group_size: min, achieved_k: min, prosecutor_risk: 1.0 / min as f64, group_histogram })
}

/// Group the QI table's records by their exact QI tuple. With no QI fields the
/// actor table forms a single class.
pub fn assess_risk(ds: &CohortDataset, quasi_identifiers: &[FieldPath]) -> Result<RiskReport, AnonymizeError> {
    let table = common_table(quasi_identifiers, "quasi_identifiers")?.unwrap_or(Table::Actors);
    if ds.table_len(table) == 0 {
        return Err(AnonymizeError::UndefinedRisk(format!("table {table} is empty")));
    }
    if quasi_identifiers.is_empty() {
        return risk_from_tuples(std::iter::repeat_n((), ds.table_len(table)));
    }
    risk_from_tuples(read_tuples(ds, table, quasi_identifiers).into_iter().map(|(_, t)| t))
}

/// Shannon entropy in bits of the empirical value distribution.
pub fn shannon_entropy<T: Eq + Hash>(column: &[T]) -> f64 {
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for v in column {
        *counts.entry(v).or_default() += 1;
    }
    // summing in sorted order makes any relabelling give the identical float
    let mut counts: Vec<usize> = counts.into_values().collect();
    counts.sort_unstable();
    let n = column.len() as f64;
    -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// `1 - H(after)/H(before)` clamped to [0,1]; 0 when `before` is constant.
pub fn utility_loss<T: Eq + Hash>(before: &[T], after: &[T]) -> f64 {
    let hb = shannon_entropy(before);
    if hb == 0.0 {
        return 0.0;
    }
    (1.0 - shannon_entropy(after) / hb).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_qi_example() {
        let mut tuples = vec![("T1", "dev"); 3];
        tuples.extend([("T2", "dev"); 2]);
        tuples.push(("T2", "lead"));
        let r = risk_from_tuples(tuples).unwrap();
        assert_eq!(r.achieved_k, 1);
        assert_eq!(r.prosecutor_risk, 1.0);
        assert_eq!(r.group_histogram, BTreeMap::from([(3, 1), (2, 1), (1, 1)]));
    }

    #[test]
    fn single_class() {
        let r = risk_from_tuples(vec![0; 8]).unwrap();
        assert_eq!((r.achieved_k, r.prosecutor_risk), (8, 0.125));
        assert!(matches!(risk_from_tuples(Vec::<u8>::new()), Err(AnonymizeError::UndefinedRisk(_))));
    }

    #[test]
    fn utility_examples() {
        let before = ["a", "b", "c", "d"];
        assert_eq!(utility_loss(&before, &before), 0.0);
        assert_eq!(utility_loss(&before, &["x"; 4]), 1.0);
        assert_eq!(utility_loss(&before, &["ab", "ab", "cd", "cd"]), 0.5);
        assert_eq!(utility_loss(&["k"; 3], &["k"; 3]), 0.0);
        // relabelling keeps the distribution
        assert_eq!(utility_loss(&before, &["q", "r", "s", "t"]), 0.0);
    }
}

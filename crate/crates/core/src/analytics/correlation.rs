use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::MarkRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
    pub n: usize,
}

/// Why a coefficient could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum Undefined {
    #[error("fewer than two paired subjects")]
    TooFewPairs,
    #[error("zero variance")]
    ZeroVariance,
}

/// Pearson product-moment coefficient, `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "paired samples");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Correlate paired samples.
pub fn correlate_pairs(x: &[f64], y: &[f64]) -> Result<Correlation, Undefined> {
    if x.len() < 2 {
        return Err(Undefined::TooFewPairs);
    }
    let p = pearson(x, y).ok_or(Undefined::ZeroVariance)?;
    let s = spearman(x, y).ok_or(Undefined::ZeroVariance)?;
    Ok(Correlation { pearson: p, spearman: s, n: x.len() })
}

/// Correlate a per-subject metric with the marks of one assessment.
///
/// Only subjects present on both sides are paired. Generalised marks enter as
/// their bin midpoints.
pub fn correlate(
    metric: &BTreeMap<String, f64>,
    marks: &[MarkRecord],
    assessment_id: &str,
) -> Result<Correlation, Undefined> {
    let (x, y): (Vec<f64>, Vec<f64>) = marks
        .iter()
        .filter(|m| m.assessment_id == assessment_id)
        .filter_map(|m| metric.get(&m.subject_ref).map(|v| (*v, m.value.representative())))
        .unzip();
    correlate_pairs(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let c = correlate_pairs(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert_eq!((c.pearson, c.spearman, c.n), (1.0, 1.0, 4));
        let c = correlate_pairs(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!((c.pearson, c.spearman), (-1.0, -1.0));
    }

    #[test]
    fn monotone_but_not_linear() {
        let c = correlate_pairs(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]).unwrap();
        assert_eq!(c.spearman, 1.0);
        assert!(c.pearson < 1.0 && c.pearson > 0.98);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn undefined_cases() {
        assert_eq!(correlate_pairs(&[1.0], &[2.0]), Err(Undefined::TooFewPairs));
        assert_eq!(correlate_pairs(&[1.0, 2.0], &[5.0, 5.0]), Err(Undefined::ZeroVariance));
    }
}

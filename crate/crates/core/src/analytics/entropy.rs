use std::collections::BTreeMap;

use crate::model::{CohortDataset, TeamRecord};

use super::AnalyticsError;

/// Shannon entropy of a count distribution normalised by `log2(n)`, where `n`
/// is the number of members including those with zero counts.
///
/// Returns 0 when there is a single member or no commits at all, and exactly
/// 1 when every member has the same positive count.
pub fn normalized_entropy(counts: &[u64]) -> f64 {
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    if n <= 1 || total == 0 {
        return 0.0;
    }
    if counts.iter().all(|&c| c == counts[0]) {
        return 1.0;
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    (h / (n as f64).log2()).clamp(0.0, 1.0)
}

/// Authored-commit count per team member, in member order.
pub fn member_commit_counts(team: &TeamRecord, ds: &CohortDataset) -> Result<Vec<u64>, AnalyticsError> {
    for m in &team.member_refs {
        if ds.actor(m).is_none() {
            return Err(AnalyticsError::UnresolvedMember { team: team.team_id.clone(), member: m.clone() });
        }
    }
    let mut counts: BTreeMap<&str, u64> = team.member_refs.iter().map(|m| (m.as_str(), 0)).collect();
    for c in &ds.commits {
        if let Some(n) = counts.get_mut(c.author_ref.as_str()) {
            *n += 1;
        }
    }
    Ok(team.member_refs.iter().map(|m| counts[m.as_str()]).collect())
}

/// Normalised commit entropy of one team, attributing commits to authors.
pub fn commit_entropy(team: &TeamRecord, ds: &CohortDataset) -> Result<f64, AnalyticsError> {
    Ok(normalized_entropy(&member_commit_counts(team, ds)?))
}

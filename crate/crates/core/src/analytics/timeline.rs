use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::model::values::{next_period, period_label};
use crate::model::{CohortDataset, Granularity, TeamRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodCount {
    pub period: String,
    pub count: u64,
}

/// Commits plus events by team members per period, contiguous from first to
/// last activity and zero-filled.
///
/// Values already generalised to weeks are placed on the week's Monday when a
/// daily timeline is requested.
pub fn activity_timeline(ds: &CohortDataset, team: &TeamRecord, granularity: Granularity) -> Vec<PeriodCount> {
    let members: BTreeSet<&str> = team.member_refs.iter().map(String::as_str).collect();
    let dates = ds
        .commits
        .iter()
        .filter(|c| members.contains(c.author_ref.as_str()))
        .map(|c| c.authored_at.date())
        .chain(
            ds.events
                .iter()
                .filter(|e| members.contains(e.actor_ref.as_str()))
                .map(|e| e.occurred_at.date()),
        );

    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let (mut first, mut last): (Option<NaiveDate>, Option<NaiveDate>) = (None, None);
    for d in dates {
        *counts.entry(period_label(d, granularity)).or_default() += 1;
        first = Some(first.map_or(d, |f| f.min(d)));
        last = Some(last.map_or(d, |l| l.max(d)));
    }
    let (Some(first), Some(last)) = (first, last) else {
        return Vec::new();
    };

    let mut out = Vec::new();
    let last_label = period_label(last, granularity);
    let mut cursor = first;
    loop {
        let label = period_label(cursor, granularity);
        let done = label == last_label;
        out.push(PeriodCount { count: counts.get(&label).copied().unwrap_or(0), period: label });
        if done {
            break;
        }
        cursor = next_period(cursor, granularity);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn ds_with_commits(times: &[i64]) -> (CohortDataset, TeamRecord) {
        let mut ds = CohortDataset::empty(Stage::Anonymised);
        ds.actors.push(ActorRecord {
            actor_id: "p".into(),
            display_name: String::new(),
            email: String::new(),
            username: String::new(),
            source_system: SourceSystem::Git,
        });
        for (i, t) in times.iter().enumerate() {
            ds.commits.push(CommitRecord {
                sha: format!("{:040x}", i + 1),
                repo_id: "r".into(),
                author_ref: "p".into(),
                committer_ref: "p".into(),
                authored_at: Instant::Seconds(*t),
                message: String::new(),
                parent_shas: vec![],
                on_default_first_parent: false,
                insertions: None,
                deletions: None,
            });
        }
        let team = TeamRecord { team_id: "t".into(), project_id: "r".into(), member_refs: vec!["p".into()] };
        (ds, team)
    }

    #[test]
    fn no_activity_is_empty() {
        let (ds, team) = ds_with_commits(&[]);
        assert!(activity_timeline(&ds, &team, Granularity::Day).is_empty());
    }

    #[test]
    fn same_day_commits_collapse() {
        // 2023-10-05 08:00, 12:00, 23:59 UTC
        let (ds, team) = ds_with_commits(&[1_696_492_800, 1_696_507_200, 1_696_550_340]);
        let t = activity_timeline(&ds, &team, Granularity::Day);
        assert_eq!(t, vec![PeriodCount { period: "2023-10-05".into(), count: 3 }]);
    }

    #[test]
    fn gaps_are_zero_filled() {
        let (ds, team) = ds_with_commits(&[1_696_492_800, 1_696_492_800 + 3 * 86_400]);
        let t = activity_timeline(&ds, &team, Granularity::Day);
        let counts: Vec<u64> = t.iter().map(|p| p.count).collect();
        assert_eq!(counts, vec![1, 0, 0, 1]);
        assert_eq!(t[3].period, "2023-10-08");
        let weeks = activity_timeline(&ds, &team, Granularity::Week);
        assert_eq!(weeks.iter().map(|p| p.period.as_str()).collect::<Vec<_>>(), vec!["2023-W40"]);
    }
}

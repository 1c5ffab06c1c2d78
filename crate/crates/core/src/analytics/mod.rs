//! Learning-analytics metrics over anonymised cohorts.
//!
//! [`analyze`] assembles a [`MetricReport`]: normalised commit entropy per
//! team, mistake findings, per-team activity timelines, and correlations
//! between activity metrics and marks. It refuses datasets that are not at
//! the anonymised stage.

mod correlation;
mod entropy;
mod mistakes;
mod timeline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{CohortDataset, Granularity, Stage};

pub use correlation::{average_ranks, correlate, correlate_pairs, pearson, spearman, Correlation, Undefined};
pub use entropy::{commit_entropy, member_commit_counts, normalized_entropy};
pub use mistakes::{detect_direct_default_commits, detect_unintegrated_branches, MistakeFinding, MistakeKind};
pub use timeline::{activity_timeline, PeriodCount};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("stage {found}, expected anonymised")]
    Stage { found: Stage },
    #[error("team {team:?} member {member:?} is not in the actor table")]
    UnresolvedMember { team: String, member: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub metric_name: String,
    pub assessment_id: String,
    pub pearson: f64,
    pub spearman: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedCorrelation {
    pub metric_name: String,
    pub assessment_id: String,
    pub reason: Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_team_entropy: BTreeMap<String, f64>,
    pub findings: Vec<MistakeFinding>,
    pub correlations: Vec<CorrelationEntry>,
    pub undefined_correlations: Vec<UndefinedCorrelation>,
    pub timelines: BTreeMap<String, Vec<PeriodCount>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisOptions {
    pub granularity: Granularity,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { granularity: Granularity::Day }
    }
}

/// Per-subject metrics correlated against marks, keyed by metric name.
pub fn subject_metrics(ds: &CohortDataset) -> Result<BTreeMap<&'static str, BTreeMap<String, f64>>, AnalyticsError> {
    let members: BTreeSet<&str> = ds.teams.iter().flat_map(|t| t.member_refs.iter().map(String::as_str)).collect();
    let mut commits: BTreeMap<String, f64> = members.iter().map(|m| (m.to_string(), 0.0)).collect();
    let mut events = commits.clone();
    for c in &ds.commits {
        if let Some(n) = commits.get_mut(&c.author_ref) {
            *n += 1.0;
        }
    }
    for e in &ds.events {
        if let Some(n) = events.get_mut(&e.actor_ref) {
            *n += 1.0;
        }
    }
    let mut entropy = BTreeMap::new();
    for t in &ds.teams {
        entropy.insert(t.team_id.clone(), commit_entropy(t, ds)?);
    }
    Ok([("commit_count", commits), ("event_count", events), ("commit_entropy", entropy)].into())
}

pub fn analyze(ds: &CohortDataset, options: AnalysisOptions) -> Result<MetricReport, AnalyticsError> {
    if ds.stage() != Stage::Anonymised {
        return Err(AnalyticsError::Stage { found: ds.stage() });
    }

    let mut per_team_entropy = BTreeMap::new();
    let mut timelines = BTreeMap::new();
    for t in &ds.teams {
        per_team_entropy.insert(t.team_id.clone(), commit_entropy(t, ds)?);
        timelines.insert(t.team_id.clone(), activity_timeline(ds, t, options.granularity));
    }

    let mut findings = detect_direct_default_commits(ds);
    findings.extend(detect_unintegrated_branches(ds));

    let assessments: BTreeSet<&str> = ds.marks.iter().map(|m| m.assessment_id.as_str()).collect();
    let mut correlations = Vec::new();
    let mut undefined_correlations = Vec::new();
    for (metric_name, metric) in subject_metrics(ds)? {
        for assessment in &assessments {
            match correlate(&metric, &ds.marks, assessment) {
                Ok(c) => correlations.push(CorrelationEntry {
                    metric_name: metric_name.to_string(),
                    assessment_id: assessment.to_string(),
                    pearson: c.pearson,
                    spearman: c.spearman,
                    n: c.n,
                }),
                // a metric with no paired subject at all is not worth reporting
                Err(Undefined::TooFewPairs)
                    if !ds.marks.iter().any(|m| &m.assessment_id == assessment && metric.contains_key(&m.subject_ref)) => {}
                Err(reason) => undefined_correlations.push(UndefinedCorrelation {
                    metric_name: metric_name.to_string(),
                    assessment_id: assessment.to_string(),
                    reason,
                }),
            }
        }
    }

    Ok(MetricReport { per_team_entropy, findings, correlations, undefined_correlations, timelines })
}

/// Human-readable rendering of a report.
pub fn render_table(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>8}", "team", "entropy");
    for (team, e) in &report.per_team_entropy {
        let _ = writeln!(out, "{team:<24} {e:>8.4}");
    }

    let _ = writeln!(out, "\n{:<24} {:<22} {:<42} {}", "team", "finding", "evidence", "at");
    for f in &report.findings {
        let kind = match f.kind {
            MistakeKind::DirectDefaultCommit => "direct_default_commit",
            MistakeKind::UnintegratedBranch => "unintegrated_branch",
        };
        let _ = writeln!(out, "{:<24} {:<22} {:<42} {}", f.team_id, kind, f.evidence, f.occurred_at.label());
    }

    let _ = writeln!(out, "\n{:<16} {:<12} {:>9} {:>9} {:>4}", "metric", "assessment", "pearson", "spearman", "n");
    for c in &report.correlations {
        let _ = writeln!(
            out,
            "{:<16} {:<12} {:>9.4} {:>9.4} {:>4}",
            c.metric_name, c.assessment_id, c.pearson, c.spearman, c.n
        );
    }
    for u in &report.undefined_correlations {
        let _ = writeln!(out, "{:<16} {:<12} {:>9} ({})", u.metric_name, u.assessment_id, "undefined", u.reason);
    }

    let _ = writeln!(out, "\n{:<24} {:>8} {:>8}", "team", "periods", "activity");
    for (team, periods) in &report.timelines {
        let total: u64 = periods.iter().map(|p| p.count).sum();
        let _ = writeln!(out, "{team:<24} {:>8} {total:>8}", periods.len());
    }
    out
}

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Granularity, Table};

use super::fields::{common_table, parse_fields, FieldPath};
use super::AnonymizeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneralizeKind {
    /// Bin width.
    NumericBins(f64),
    TimeGranularity(Granularity),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizeRule {
    pub field: String,
    pub kind: GeneralizeKind,
}

/// Zero-mean noise distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    /// Uniform on `[-half_width, half_width]`.
    Uniform(f64),
    /// Laplace with the given scale.
    Laplace(f64),
}

impl Noise {
    pub fn parameter(&self) -> f64 {
        match *self {
            Noise::Uniform(w) | Noise::Laplace(w) => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbRule {
    pub field: String,
    pub noise: Noise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnatomizeRule {
    pub quasi_identifiers: Vec<String>,
    pub sensitive: Vec<String>,
    pub group_size: usize,
}

/// Declarative per-field anonymisation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnonymizationPolicy {
    pub seed: u64,
    #[serde(default)]
    pub pseudonym_fields: Vec<String>,
    #[serde(default)]
    pub generalize: Vec<GeneralizeRule>,
    #[serde(default)]
    pub perturb: Vec<PerturbRule>,
    #[serde(default)]
    pub suppress: Vec<String>,
    #[serde(default)]
    pub anatomize: Option<AnatomizeRule>,
    #[serde(default = "default_k")]
    pub k_threshold: usize,
    #[serde(default)]
    pub quasi_identifiers: Vec<String>,
}

fn default_k() -> usize {
    1
}

impl Default for AnonymizationPolicy {
    fn default() -> Self {
        Self {
            seed: 0,
            pseudonym_fields: Vec::new(),
            generalize: Vec::new(),
            perturb: Vec::new(),
            suppress: Vec::new(),
            anatomize: None,
            k_threshold: 1,
            quasi_identifiers: Vec::new(),
        }
    }
}

impl AnonymizationPolicy {
    /// Pseudonymous ids, no names or emails, marks in bins of 10, day-granular timestamps, k = 3.
    pub fn reference() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        Self {
            seed: 20_231_002,
            pseudonym_fields: s(&["actors.actor_id", "actors.username", "events.payload.source_branch"]),
            generalize: vec![
                GeneralizeRule { field: "marks.value".into(), kind: GeneralizeKind::NumericBins(10.0) },
                GeneralizeRule {
                    field: "commits.authored_at".into(),
                    kind: GeneralizeKind::TimeGranularity(Granularity::Day),
                },
                GeneralizeRule {
                    field: "events.occurred_at".into(),
                    kind: GeneralizeKind::TimeGranularity(Granularity::Day),
                },
            ],
            perturb: Vec::new(),
            suppress: s(&["actors.email", "actors.display_name", "commits.message"]),
            anatomize: None,
            k_threshold: 3,
            quasi_identifiers: s(&["marks.assessment_id", "marks.value"]),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, AnonymizeError> {
        let policy: Self = toml::from_str(text).map_err(|e| AnonymizeError::Config(e.to_string()))?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn load(path: &Path) -> Result<Self, AnonymizeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AnonymizeError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("policy serializes")
    }

    /// Check structural invariants and that every field supports its strategy.
    pub fn validate(&self) -> Result<(), AnonymizeError> {
        let config = |m: String| Err(AnonymizeError::Config(m));
        if self.k_threshold < 1 {
            return config("k_threshold must be at least 1".into());
        }

        let mut owners: BTreeMap<FieldPath, &str> = BTreeMap::new();
        let mut claim = |field: FieldPath, strategy: &'static str| -> Result<(), AnonymizeError> {
            match owners.insert(field.clone(), strategy) {
                Some(prev) => Err(AnonymizeError::Config(format!("{field} appears under both {prev} and {strategy}"))),
                None => Ok(()),
            }
        };

        for f in parse_fields(&self.pseudonym_fields)? {
            if pseudonym_domain(&f).is_none() {
                return config(format!("{f} cannot be pseudonymised"));
            }
            claim(f, "pseudonym_fields")?;
        }
        for f in parse_fields(&self.suppress)? {
            check_suppressible(&f)?;
            claim(f, "suppress")?;
        }
        for rule in &self.generalize {
            let f: FieldPath = rule.field.parse()?;
            match rule.kind {
                GeneralizeKind::NumericBins(w) => {
                    if !(w > 0.0 && w.is_finite()) {
                        return config(format!("{f}: bin width must be positive"));
                    }
                    if numeric_range(&f).is_none() {
                        return config(format!("{f} is not numeric"));
                    }
                }
                GeneralizeKind::TimeGranularity(_) => {
                    if !is_timestamp(&f) {
                        return config(format!("{f} is not a timestamp"));
                    }
                }
            }
            claim(f, "generalize")?;
        }
        for rule in &self.perturb {
            let f: FieldPath = rule.field.parse()?;
            let p = rule.noise.parameter();
            if !(p > 0.0 && p.is_finite()) {
                return config(format!("{f}: noise parameter must be positive"));
            }
            if numeric_range(&f).is_none() {
                return config(format!("{f} is not numeric"));
            }
            claim(f, "perturb")?;
        }
        if let Some(a) = &self.anatomize {
            if a.group_size < 2 {
                return config("anatomize.group_size must be at least 2".into());
            }
            let qi = parse_fields(&a.quasi_identifiers)?;
            let sensitive = parse_fields(&a.sensitive)?;
            if sensitive.is_empty() {
                return config("anatomize needs at least one sensitive field".into());
            }
            let mut all = qi.clone();
            all.extend(sensitive.iter().cloned());
            common_table(&all, "anatomize")?;
            for f in sensitive {
                check_suppressible(&f)?;
                claim(f, "anatomize")?;
            }
        }
        common_table(&parse_fields(&self.quasi_identifiers)?, "quasi_identifiers")?;
        Ok(())
    }
}

/// HMAC domain for pseudonymising `field`. Id domains are shared by every
/// field that references them so links survive.
pub fn pseudonym_domain(field: &FieldPath) -> Option<&'static str> {
    match (field.table, field.field.as_str()) {
        (Table::Actors, "actor_id")
        | (Table::Commits, "author_ref" | "committer_ref")
        | (Table::Events, "actor_ref") => Some("actor_id"),
        (Table::Teams, "team_id") => Some("team_id"),
        (Table::Commits, "repo_id") | (Table::Events | Table::Teams, "project_id") => Some("project_id"),
        (Table::Actors, "display_name") => Some("actors.display_name"),
        (Table::Actors, "email") => Some("actors.email"),
        (Table::Actors, "username") => Some("actors.username"),
        (Table::Commits, "message") => Some("commits.message"),
        (Table::Events, _) if field.payload_key().is_some() => Some("events.payload"),
        _ => None,
    }
}

/// Payload keys the record invariants require, which therefore cannot be removed.
pub const REQUIRED_PAYLOAD_KEYS: [&str; 2] = ["source_branch", "build_status"];

pub fn check_suppressible(field: &FieldPath) -> Result<(), AnonymizeError> {
    let ok = match (field.table, field.field.as_str()) {
        (Table::Actors, "display_name" | "email" | "username") => true,
        (Table::Commits, "message" | "insertions" | "deletions") => true,
        (Table::Events, _) => field.payload_key().is_some_and(|k| !REQUIRED_PAYLOAD_KEYS.contains(&k)),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(AnonymizeError::Config(format!("{field} cannot be removed")))
    }
}

/// Legal range and integrality of numeric fields.
pub fn numeric_range(field: &FieldPath) -> Option<(f64, f64, bool)> {
    match (field.table, field.field.as_str()) {
        (Table::Marks, "value") => Some((0.0, 100.0, false)),
        (Table::Commits, "insertions" | "deletions") => Some((0.0, f64::INFINITY, true)),
        _ => None,
    }
}

pub fn is_timestamp(field: &FieldPath) -> bool {
    field.is(Table::Commits, "authored_at") || field.is(Table::Events, "occurred_at")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_policy_is_valid_and_round_trips() {
        let p = AnonymizationPolicy::reference();
        p.validate().unwrap();
        assert_eq!(AnonymizationPolicy::from_toml(&p.to_toml()).unwrap(), p);
    }

    #[test]
    fn toml_dialect() {
        let p = AnonymizationPolicy::from_toml(
            r#"
            seed = 7
            suppress = ["actors.email"]
            k_threshold = 2
            quasi_identifiers = ["marks.value"]
            [[generalize]]
            field = "marks.value"
            kind = { numeric_bins = 5.0 }
            [[perturb]]
            field = "commits.insertions"
            noise = { laplace = 1.5 }
            [anatomize]
            quasi_identifiers = ["commits.author_ref"]
            sensitive = ["commits.message"]
            group_size = 3
            "#,
        )
        .unwrap();
        assert_eq!(p.generalize[0].kind, GeneralizeKind::NumericBins(5.0));
        assert_eq!(p.perturb[0].noise, Noise::Laplace(1.5));
        assert_eq!(p.anatomize.unwrap().group_size, 3);
    }

    #[test]
    fn invariants_enforced() {
        let mut p = AnonymizationPolicy { suppress: vec!["actors.email".into()], ..Default::default() };
        p.pseudonym_fields = vec!["actors.email".into()];
        assert!(p.validate().is_err(), "field under two strategies");

        let p = AnonymizationPolicy { k_threshold: 0, ..Default::default() };
        assert!(p.validate().is_err());

        let p = AnonymizationPolicy {
            generalize: vec![GeneralizeRule { field: "marks.value".into(), kind: GeneralizeKind::NumericBins(0.0) }],
            ..Default::default()
        };
        assert!(p.validate().is_err());

        let p = AnonymizationPolicy {
            anatomize: Some(AnatomizeRule {
                quasi_identifiers: vec![],
                sensitive: vec!["commits.message".into()],
                group_size: 1,
            }),
            ..Default::default()
        };
        assert!(p.validate().is_err());

        let p = AnonymizationPolicy { suppress: vec!["events.payload.source_branch".into()], ..Default::default() };
        assert!(p.validate().is_err(), "required payload key");

        let p = AnonymizationPolicy { suppress: vec!["actors.shoe_size".into()], ..Default::default() };
        assert!(matches!(p.validate(), Err(AnonymizeError::Config(_))));
    }
}

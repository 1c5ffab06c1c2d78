//! Policy-driven anonymisation of resolved cohorts.
//!
//! [`apply_policy`] runs pseudonymisation, suppression, generalisation,
//! perturbation and anatomisation in that fixed order, then measures
//! re-identification risk on the policy's quasi-identifiers. A result whose
//! achieved k falls below the policy threshold is never returned.

mod anatomize;
mod fields;
mod policy;
mod risk;
mod strategies;

use std::collections::BTreeMap;

use crate::model::{CohortDataset, Stage};
use crate::vault::VaultKey;

pub use anatomize::{anatomize, anatomize_dataset, AnatomyRow};
pub use fields::{parse_fields, read_column, read_tuples, FieldPath};
pub use policy::{
    check_suppressible, is_timestamp, numeric_range, pseudonym_domain, AnatomizeRule, AnonymizationPolicy,
    GeneralizeKind, GeneralizeRule, Noise, PerturbRule, REQUIRED_PAYLOAD_KEYS,
};
pub use risk::{assess_risk, risk_from_tuples, shannon_entropy, utility_loss, RiskReport, UtilityReport};
pub use strategies::{
    generalize, generalize_instant, generalize_measure, noise_sample, numeric_bin, perturb, perturb_dataset,
    pseudonym_token, pseudonymize, suppress, PSEUDONYM_KEY_LEN, TOKEN_LEN,
};

pub const PSEUDONYM_KEY_LABEL: &str = "glla/pseudonym/v1";

#[derive(Debug, thiserror::Error)]
pub enum AnonymizeError {
    #[error("policy: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("record {record}: {message}")]
    Type { record: String, message: String },
    #[error("stage {found}, expected resolved")]
    Stage { found: Stage },
    #[error("risk undefined: {0}")]
    UndefinedRisk(String),
    #[error("achieved k={} is below k_threshold={k_threshold}", report.achieved_k)]
    Threshold { k_threshold: usize, report: RiskReport },
}

/// The pseudonymisation key derived from the vault key.
pub fn pseudonym_key(vault_key: &VaultKey) -> VaultKey {
    vault_key.derive(PSEUDONYM_KEY_LABEL)
}

#[derive(Debug, Clone)]
pub struct Anonymized {
    pub dataset: CohortDataset,
    pub risk: RiskReport,
    pub utility: UtilityReport,
}

fn touched_fields(policy: &AnonymizationPolicy) -> Result<Vec<FieldPath>, AnonymizeError> {
    let mut out = parse_fields(&policy.pseudonym_fields)?;
    out.extend(parse_fields(&policy.suppress)?);
    for r in &policy.generalize {
        out.push(r.field.parse()?);
    }
    for r in &policy.perturb {
        out.push(r.field.parse()?);
    }
    if let Some(a) = &policy.anatomize {
        out.extend(parse_fields(&a.sensitive)?);
    }
    Ok(out)
}

fn column_values(ds: &CohortDataset, field: &FieldPath) -> Vec<Option<String>> {
    read_column(ds, field).into_iter().map(|(_, v)| v).collect()
}

/// Anonymise a resolved dataset. Output is identical for any `parallelism`.
pub fn apply_policy(
    ds: &CohortDataset,
    policy: &AnonymizationPolicy,
    pseudonym_key: &[u8],
    parallelism: usize,
) -> Result<Anonymized, AnonymizeError> {
    policy.validate()?;
    if ds.stage() != Stage::Resolved {
        return Err(AnonymizeError::Stage { found: ds.stage() });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| AnonymizeError::Usage(e.to_string()))?;

    let mut out = pseudonymize(ds, &parse_fields(&policy.pseudonym_fields)?, pseudonym_key)?;
    out = suppress(&out, &parse_fields(&policy.suppress)?)?;
    for rule in &policy.generalize {
        out = generalize(&out, &rule.field.parse()?, rule.kind)?;
    }
    for rule in &policy.perturb {
        out = perturb_dataset(&out, &rule.field.parse()?, rule.noise, policy.seed, &pool)?;
    }
    if let Some(rule) = &policy.anatomize {
        out = anatomize_dataset(&out, rule)?;
    }
    let out = out.with_stage(Stage::Anonymised).seal();

    let risk = assess_risk(&out, &parse_fields(&policy.quasi_identifiers)?)?;

    let mut per_field_information_loss = BTreeMap::new();
    for f in touched_fields(policy)? {
        let loss = utility_loss(&column_values(ds, &f), &column_values(&out, &f));
        per_field_information_loss.insert(f.to_string(), loss);
    }

    if risk.achieved_k < policy.k_threshold {
        return Err(AnonymizeError::Threshold { k_threshold: policy.k_threshold, report: risk });
    }
    Ok(Anonymized { dataset: out, risk, utility: UtilityReport { per_field_information_loss } })
}

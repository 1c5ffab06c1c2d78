use std::collections::BTreeSet;

use hmac::{Hmac, Mac};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::model::{CohortDataset, Granularity, Instant, Measure, Record, Table};

use super::fields::FieldPath;
use super::policy::{check_suppressible, numeric_range, pseudonym_domain, GeneralizeKind, Noise};
use super::AnonymizeError;

pub const PSEUDONYM_KEY_LEN: usize = 32;
pub const TOKEN_LEN: usize = 16;

/// Keyed stable token: the first 16 hex chars of HMAC-SHA256(key, domain 0x1f value).
pub fn pseudonym_token(key: &[u8], domain: &str, value: &str) -> String {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(domain.as_bytes());
    mac.update(&[0x1f]);
    mac.update(value.as_bytes());
    let mut token = hex::encode(mac.finalize().into_bytes());
    token.truncate(TOKEN_LEN);
    token
}

fn rewrite(s: &mut String, key: &[u8], domain: &str) {
    if !s.is_empty() {
        *s = pseudonym_token(key, domain, s);
    }
}

/// Replace every listed field with keyed tokens. Identifier domains (actor,
/// team, project) are rewritten everywhere they are referenced.
pub fn pseudonymize(ds: &CohortDataset, fields: &[FieldPath], key: &[u8]) -> Result<CohortDataset, AnonymizeError> {
    if key.len() != PSEUDONYM_KEY_LEN {
        return Err(AnonymizeError::Usage(format!(
            "pseudonym key must be {PSEUDONYM_KEY_LEN} bytes, got {}",
            key.len()
        )));
    }
    let mut out = ds.clone();
    let actors: BTreeSet<String> = ds.actors.iter().map(|a| a.actor_id.clone()).collect();
    let teams: BTreeSet<String> = ds.teams.iter().map(|t| t.team_id.clone()).collect();

    let mut domains = BTreeSet::new();
    for f in fields {
        let domain =
            pseudonym_domain(f).ok_or_else(|| AnonymizeError::Config(format!("{f} cannot be pseudonymised")))?;
        domains.insert(domain);
        match domain {
            "actor_id" | "team_id" | "project_id" => {}
            _ => {
                let (table, field) = (f.table, f.field.as_str());
                match (table, field) {
                    (Table::Actors, "display_name") => {
                        out.actors.iter_mut().for_each(|a| rewrite(&mut a.display_name, key, domain))
                    }
                    (Table::Actors, "email") => out.actors.iter_mut().for_each(|a| rewrite(&mut a.email, key, domain)),
                    (Table::Actors, "username") => {
                        out.actors.iter_mut().for_each(|a| rewrite(&mut a.username, key, domain))
                    }
                    (Table::Commits, "message") => {
                        out.commits.iter_mut().for_each(|c| rewrite(&mut c.message, key, domain))
                    }
                    _ => {
                        let k = f.payload_key().expect("payload domain");
                        for e in &mut out.events {
                            if let Some(v) = e.payload.get_mut(k) {
                                rewrite(v, key, domain);
                            }
                        }
                    }
                }
            }
        }
    }

    if domains.contains("actor_id") {
        let d = "actor_id";
        out.actors.iter_mut().for_each(|a| rewrite(&mut a.actor_id, key, d));
        for c in &mut out.commits {
            rewrite(&mut c.author_ref, key, d);
            rewrite(&mut c.committer_ref, key, d);
        }
        out.events.iter_mut().for_each(|e| rewrite(&mut e.actor_ref, key, d));
        out.teams.iter_mut().flat_map(|t| t.member_refs.iter_mut()).for_each(|m| rewrite(m, key, d));
    }
    if domains.contains("team_id") {
        out.teams.iter_mut().for_each(|t| rewrite(&mut t.team_id, key, "team_id"));
    }
    for (m, orig) in out.marks.iter_mut().zip(&ds.marks) {
        if domains.contains("actor_id") && actors.contains(&orig.subject_ref) {
            rewrite(&mut m.subject_ref, key, "actor_id");
        } else if domains.contains("team_id") && teams.contains(&orig.subject_ref) {
            rewrite(&mut m.subject_ref, key, "team_id");
        }
    }
    if domains.contains("project_id") {
        let d = "project_id";
        out.commits.iter_mut().for_each(|c| rewrite(&mut c.repo_id, key, d));
        out.events.iter_mut().for_each(|e| rewrite(&mut e.project_id, key, d));
        out.teams.iter_mut().for_each(|t| rewrite(&mut t.project_id, key, d));
    }
    Ok(out)
}

/// Remove the listed fields from every record. Record counts are unchanged.
pub fn suppress(ds: &CohortDataset, fields: &[FieldPath]) -> Result<CohortDataset, AnonymizeError> {
    let mut out = ds.clone();
    for f in fields {
        check_suppressible(f)?;
        match (f.table, f.field.as_str()) {
            (Table::Actors, "display_name") => out.actors.iter_mut().for_each(|a| a.display_name.clear()),
            (Table::Actors, "email") => out.actors.iter_mut().for_each(|a| a.email.clear()),
            (Table::Actors, "username") => out.actors.iter_mut().for_each(|a| a.username.clear()),
            (Table::Commits, "message") => out.commits.iter_mut().for_each(|c| c.message.clear()),
            (Table::Commits, "insertions") => out.commits.iter_mut().for_each(|c| c.insertions = None),
            (Table::Commits, "deletions") => out.commits.iter_mut().for_each(|c| c.deletions = None),
            _ => {
                let k = f.payload_key().expect("checked suppressible");
                out.events.iter_mut().for_each(|e| {
                    e.payload.remove(k);
                });
            }
        }
    }
    Ok(out)
}

/// `[lo, lo+width)` with `lo = floor(v/width)*width`.
pub fn numeric_bin(value: f64, width: f64) -> Measure {
    let lo = (value / width).floor() * width;
    Measure::Bin { lo, hi: lo + width }
}

pub fn generalize_measure(record_id: &str, value: Measure, width: f64) -> Result<Measure, AnonymizeError> {
    match value {
        Measure::Exact(v) if v.is_finite() => Ok(numeric_bin(v, width)),
        other => Err(AnonymizeError::Type {
            record: record_id.to_string(),
            message: format!("{} is not an exact number", other.label()),
        }),
    }
}

pub fn generalize_instant(value: Instant, granularity: Granularity) -> Instant {
    value.generalize(granularity)
}

fn type_mismatch(f: &FieldPath, what: &str) -> AnonymizeError {
    AnonymizeError::Config(format!("{f} is not {what}"))
}

pub fn generalize(ds: &CohortDataset, field: &FieldPath, kind: GeneralizeKind) -> Result<CohortDataset, AnonymizeError> {
    let mut out = ds.clone();
    match kind {
        GeneralizeKind::NumericBins(width) => match (field.table, field.field.as_str()) {
            (Table::Marks, "value") => {
                for m in &mut out.marks {
                    m.value = generalize_measure(&m.primary_id(), m.value, width)?;
                }
            }
            (Table::Commits, "insertions" | "deletions") => {
                let ins = field.field == "insertions";
                for c in &mut out.commits {
                    let id = c.primary_id();
                    let slot = if ins { &mut c.insertions } else { &mut c.deletions };
                    if let Some(v) = *slot {
                        *slot = Some(generalize_measure(&id, v, width)?);
                    }
                }
            }
            _ => return Err(type_mismatch(field, "numeric")),
        },
        GeneralizeKind::TimeGranularity(g) => match (field.table, field.field.as_str()) {
            (Table::Commits, "authored_at") => {
                out.commits.iter_mut().for_each(|c| c.authored_at = generalize_instant(c.authored_at, g))
            }
            (Table::Events, "occurred_at") => {
                out.events.iter_mut().for_each(|e| e.occurred_at = generalize_instant(e.occurred_at, g))
            }
            _ => return Err(type_mismatch(field, "a timestamp")),
        },
    }
    Ok(out)
}

/// The deterministic noise stream for one record of one field.
fn substream(seed: u64, field: &str, record_id: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(field.as_bytes());
    h.update([0x1f]);
    h.update(record_id.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// One zero-mean noise draw keyed by `(seed, field, record_id)`.
pub fn noise_sample(noise: Noise, seed: u64, field: &str, record_id: &str) -> f64 {
    let mut rng = substream(seed, field, record_id);
    match noise {
        Noise::Uniform(h) => h * (2.0 * rng.random::<f64>() - 1.0),
        Noise::Laplace(b) => loop {
            // inverse CDF; u = -0.5 would give ln(0)
            let u = rng.random::<f64>() - 0.5;
            let tail = 1.0 - 2.0 * u.abs();
            if tail > 0.0 {
                break -b * u.signum() * tail.ln();
            }
        },
    }
}

fn clamp_to(v: f64, (lo, hi, integral): (f64, f64, bool)) -> f64 {
    let v = if integral { v.round() } else { v };
    v.clamp(lo, hi)
}

/// Add keyed noise to each value and clamp to `[lo, hi]`. Output depends only on
/// each value's own record id, never on position.
pub fn perturb(
    values: &[f64],
    noise: Noise,
    seed: u64,
    field: &str,
    record_ids: &[String],
    range: (f64, f64),
) -> Vec<f64> {
    values
        .iter()
        .zip(record_ids)
        .map(|(v, id)| clamp_to(v + noise_sample(noise, seed, field, id), (range.0, range.1, false)))
        .collect()
}

pub fn perturb_dataset(
    ds: &CohortDataset,
    field: &FieldPath,
    noise: Noise,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<CohortDataset, AnonymizeError> {
    let range = numeric_range(field).ok_or_else(|| type_mismatch(field, "numeric"))?;
    let name = field.to_string();
    let apply = |record_id: String, m: Measure| -> Result<Measure, AnonymizeError> {
        let v = m.exact().ok_or_else(|| AnonymizeError::Type {
            record: record_id.clone(),
            message: format!("{} is not an exact number", m.label()),
        })?;
        Ok(Measure::Exact(clamp_to(v + noise_sample(noise, seed, &name, &record_id), range)))
    };

    let mut out = ds.clone();
    pool.install(|| -> Result<(), AnonymizeError> {
        match field.table {
            Table::Marks => out.marks.par_iter_mut().try_for_each(|m| {
                m.value = apply(m.primary_id(), m.value)?;
                Ok(())
            }),
            _ => {
                let ins = field.field == "insertions";
                out.commits.par_iter_mut().try_for_each(|c| {
                    let id = c.primary_id();
                    let slot = if ins { &mut c.insertions } else { &mut c.deletions };
                    if let Some(v) = *slot {
                        *slot = Some(apply(id, v)?);
                    }
                    Ok(())
                })
            }
        }
    })?;
    Ok(out)
}

use std::collections::BTreeMap;

use crate::model::{AnatomyQiRecord, AnatomySensitiveRecord, CohortDataset, Table};

use super::fields::{common_table, read_tuples, FieldPath};
use super::policy::AnatomizeRule;
use super::strategies::suppress;
use super::AnonymizeError;

/// One record's quasi-identifier and sensitive values, aligned with the field lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnatomyRow {
    pub record_id: String,
    pub qi: Vec<Option<String>>,
    pub sensitive: Vec<Option<String>>,
}

/// Sort rows by QI values then chunk them into groups of `group_size`; the last
/// group absorbs the remainder. Sensitive values are pooled per group.
pub fn anatomize(
    table: Table,
    qi_fields: &[String],
    sensitive_fields: &[String],
    rows: &[AnatomyRow],
    group_size: usize,
) -> Result<(Vec<AnatomyQiRecord>, Vec<AnatomySensitiveRecord>), AnonymizeError> {
    if group_size < 2 {
        return Err(AnonymizeError::Config("anatomize.group_size must be at least 2".into()));
    }
    if rows.len() < group_size {
        return Err(AnonymizeError::Config(format!(
            "anatomize needs at least {group_size} {table} records, found {}",
            rows.len()
        )));
    }
    let mut sorted: Vec<&AnatomyRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.qi, &a.record_id).cmp(&(&b.qi, &b.record_id)));

    let groups = sorted.len() / group_size;
    let mut qi_table = Vec::with_capacity(rows.len());
    let mut sensitive_table = Vec::with_capacity(groups);
    for g in 0..groups {
        let end = if g + 1 == groups { sorted.len() } else { (g + 1) * group_size };
        let members = &sorted[g * group_size..end];
        let group_id = format!("{table}-g{g:05}");

        let mut values: BTreeMap<String, Vec<String>> =
            sensitive_fields.iter().map(|f| (f.clone(), Vec::new())).collect();
        for row in members {
            for (f, v) in sensitive_fields.iter().zip(&row.sensitive) {
                if let Some(v) = v {
                    values.get_mut(f).expect("field listed").push(v.clone());
                }
            }
            qi_table.push(AnatomyQiRecord {
                record_id: row.record_id.clone(),
                table,
                group_id: group_id.clone(),
                qi: qi_fields
                    .iter()
                    .zip(&row.qi)
                    .filter_map(|(f, v)| v.as_ref().map(|v| (f.clone(), v.clone())))
                    .collect(),
            });
        }
        values.values_mut().for_each(|v| v.sort());
        sensitive_table.push(AnatomySensitiveRecord { group_id, table, values });
    }
    Ok((qi_table, sensitive_table))
}

/// Split `rule.sensitive` out of its table into group-level rows.
pub fn anatomize_dataset(ds: &CohortDataset, rule: &AnatomizeRule) -> Result<CohortDataset, AnonymizeError> {
    let qi: Vec<FieldPath> = rule.quasi_identifiers.iter().map(|f| f.parse()).collect::<Result<_, _>>()?;
    let sensitive: Vec<FieldPath> = rule.sensitive.iter().map(|f| f.parse()).collect::<Result<_, _>>()?;
    let mut all = qi.clone();
    all.extend(sensitive.iter().cloned());
    let table = common_table(&all, "anatomize")?
        .ok_or_else(|| AnonymizeError::Config("anatomize needs at least one sensitive field".into()))?;

    let qi_values = read_tuples(ds, table, &qi);
    let sensitive_values = read_tuples(ds, table, &sensitive);
    let rows: Vec<AnatomyRow> = sensitive_values
        .into_iter()
        .enumerate()
        .map(|(i, (record_id, s))| AnatomyRow {
            record_id,
            qi: qi_values.get(i).map(|(_, q)| q.clone()).unwrap_or_default(),
            sensitive: s,
        })
        .collect();

    let names = |fs: &[FieldPath]| fs.iter().map(|f| f.field.clone()).collect::<Vec<_>>();
    let (qi_rows, groups) = anatomize(table, &names(&qi), &names(&sensitive), &rows, rule.group_size)?;

    let mut out = suppress(ds, &sensitive)?;
    out.anatomy_qi.extend(qi_rows);
    out.anatomy_sensitive.extend(groups);
    Ok(out)
}

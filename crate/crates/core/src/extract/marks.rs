use std::collections::BTreeSet;
use std::io::Read;

use crate::model::{MarkRecord, Measure};

use super::{ExtractError, SourceDescriptor};

pub const MARKS_HEADER: [&str; 3] = ["subject", "assessment", "value"];

/// Parse a `subject,assessment,value` table. Rows are numbered from 2, the header being row 1.
pub fn parse_marks(reader: impl Read) -> Result<Vec<MarkRecord>, ExtractError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| ExtractError::Marks { row: 1, message: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != MARKS_HEADER {
        return Err(ExtractError::Marks { row: 1, message: format!("header must be {}", MARKS_HEADER.join(",")) });
    }

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| ExtractError::Marks { row, message: e.to_string() })?;
        let (subject, assessment, raw) = (&rec[0], &rec[1], &rec[2]);
        if subject.is_empty() || assessment.is_empty() {
            return Err(ExtractError::Marks { row, message: "empty subject or assessment".into() });
        }
        let value: f64 =
            raw.parse().map_err(|_| ExtractError::Marks { row, message: format!("value {raw:?} is not a number") })?;
        if !(0.0..=100.0).contains(&value) {
            return Err(ExtractError::Marks { row, message: format!("value {raw} outside [0,100]") });
        }
        if !seen.insert((subject.to_string(), assessment.to_string())) {
            return Err(ExtractError::DuplicateMark {
                row,
                subject: subject.to_string(),
                assessment: assessment.to_string(),
            });
        }
        out.push(MarkRecord {
            subject_ref: subject.to_string(),
            assessment_id: assessment.to_string(),
            value: Measure::Exact(value),
        });
    }
    Ok(out)
}

pub fn load_marks(desc: &SourceDescriptor) -> Result<Vec<MarkRecord>, ExtractError> {
    let file = std::fs::File::open(&desc.locator)
        .map_err(|e| ExtractError::Source { locator: desc.locator.clone(), message: e.to_string() })?;
    parse_marks(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows() {
        let m = parse_marks("subject,assessment,value\nalice,cw1,67\n".as_bytes()).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].subject_ref.as_str(), m[0].assessment_id.as_str()), ("alice", "cw1"));
        assert_eq!(m[0].value, Measure::Exact(67.0));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_marks("subject,assessment,value\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_names_row() {
        let e = parse_marks("subject,assessment,value\nalice,cw1,105\n".as_bytes()).unwrap_err();
        assert!(matches!(e, ExtractError::Marks { row: 2, .. }), "{e}");
    }

    #[test]
    fn duplicates_and_bad_header() {
        let e = parse_marks("subject,assessment,value\na,x,1\nb,x,2\na,x,3\n".as_bytes()).unwrap_err();
        assert!(matches!(e, ExtractError::DuplicateMark { row: 4, .. }));
        assert!(parse_marks("student,assessment,value\n".as_bytes()).is_err());
    }
}

//! RFC 4180 CSV: header row, CRLF line endings, UTF-8 without BOM.

use super::{ExportRow, ExportTable, FIXED_COLUMNS};
use crate::model::ObservationStatus;

fn needs_quotes(field: &str) -> bool {
    field.contains([',', '"', '\r', '\n'])
}

fn push_field(out: &mut Vec<u8>, field: &str) {
    if needs_quotes(field) {
        out.push(b'"');
        out.extend_from_slice(field.replace('"', "\"\"").as_bytes());
        out.push(b'"');
    } else {
        out.extend_from_slice(field.as_bytes());
    }
}

fn push_record<S: AsRef<str>>(out: &mut Vec<u8>, fields: &[S]) {
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        push_field(out, field.as_ref());
    }
    out.extend_from_slice(b"\r\n");
}

pub fn write_csv(table: &ExportTable) -> Vec<u8> {
    let mut out = Vec::new();
    for record in table.matrix() {
        push_record(&mut out, &record);
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("CSV syntax: {0}")]
    Syntax(#[from] ::csv::Error),
    #[error("missing header row")]
    MissingHeader,
    #[error("header column {index} should be {expected:?}, found {found:?}")]
    BadHeader {
        index: usize,
        expected: &'static str,
        found: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: bad {column}: {value:?}")]
    BadValue {
        row: usize,
        column: &'static str,
        value: String,
    },
}

/// Reads an export back into rows.
pub fn parse_csv(bytes: &[u8]) -> Result<ExportTable, CsvError> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = records.next().ok_or(CsvError::MissingHeader)??;
    for (index, expected) in FIXED_COLUMNS.iter().enumerate() {
        let found = header.get(index).unwrap_or_default();
        if found != *expected {
            return Err(CsvError::BadHeader {
                index,
                expected,
                found: found.to_string(),
            });
        }
    }
    let groups: Vec<String> = header.iter().skip(FIXED_COLUMNS.len()).map(str::to_string).collect();
    let width = header.len();

    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let record = record?;
        let row = i + 2;
        if record.len() != width {
            return Err(CsvError::FieldCount {
                row,
                expected: width,
                found: record.len(),
            });
        }
        let bad = |column: &'static str, value: &str| CsvError::BadValue {
            row,
            column,
            value: value.to_string(),
        };
        rows.push(ExportRow {
            session_id: record[0].to_string(),
            subject_id: record[1].to_string(),
            subject_name: record[2].to_string(),
            observer_id: record[3].to_string(),
            prompt_index: record[4].parse().map_err(|_| bad("prompt_index", &record[4]))?,
            timestamp: record[5].parse().map_err(|_| bad("timestamp", &record[5]))?,
            status: ObservationStatus::parse(&record[6]).ok_or_else(|| bad("status", &record[6]))?,
            cells: record.iter().skip(FIXED_COLUMNS.len()).map(str::to_string).collect(),
        });
    }
    Ok(ExportTable { groups, rows })
}

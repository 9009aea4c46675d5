//! Tabular exports of a recorded session.
//!
//! Rows are keyed by subject: sorted by the subject's roster position, then
//! by timestamp, then by observer id. The column layout is
//!
//! ```text
//! session_id, subject_id, subject_name, observer_id, prompt_index, timestamp, status, <group>...
//! ```
//!
//! with one trailing column per category group in scheme order. A
//! multiple-selection cell joins its labels with `;` in scheme label order.

mod csv;
mod xlsx;
mod zip;

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::model::{
    Observation, ObservationStatus, SessionConfig, MULTI_LABEL_SEPARATOR,
};
use crate::session::SessionState;
use crate::time::Timestamp;

pub use self::csv::{parse_csv, write_csv, CsvError};
pub use self::xlsx::write_xlsx;

/// The fixed leading columns.
pub const FIXED_COLUMNS: [&str; 7] = [
    "session_id",
    "subject_id",
    "subject_name",
    "observer_id",
    "prompt_index",
    "timestamp",
    "status",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportRow {
    pub session_id: String,
    pub subject_id: String,
    pub subject_name: String,
    pub observer_id: String,
    pub prompt_index: u64,
    pub timestamp: Timestamp,
    pub status: ObservationStatus,
    /// One cell per category group, in scheme order.
    pub cells: Vec<String>,
}

impl ExportRow {
    /// The row as text cells, exactly as they appear in the CSV.
    pub fn to_cells(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(FIXED_COLUMNS.len() + self.cells.len());
        out.push(self.session_id.clone());
        out.push(self.subject_id.clone());
        out.push(self.subject_name.clone());
        out.push(self.observer_id.clone());
        out.push(self.prompt_index.to_string());
        out.push(self.timestamp.to_string());
        out.push(self.status.as_str().to_string());
        out.extend(self.cells.iter().cloned());
        out
    }

    /// Labels recorded in group column `i`.
    pub fn labels(&self, i: usize) -> Vec<&str> {
        self.cells
            .get(i)
            .filter(|c| !c.is_empty())
            .map(|c| c.split(MULTI_LABEL_SEPARATOR).collect())
            .unwrap_or_default()
    }
}

/// Export rows plus the group column names they were rendered against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportTable {
    pub groups: Vec<String>,
    pub rows: Vec<ExportRow>,
}

impl ExportTable {
    pub fn header(&self) -> Vec<String> {
        FIXED_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(self.groups.iter().cloned())
            .collect()
    }

    /// Header followed by every row, as text.
    pub fn matrix(&self) -> Vec<Vec<String>> {
        std::iter::once(self.header())
            .chain(self.rows.iter().map(ExportRow::to_cells))
            .collect()
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == name)
    }
}

pub(crate) fn roster_positions(config: &SessionConfig) -> HashMap<&str, usize> {
    config
        .roster
        .subjects
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect()
}

/// Subject (roster position), then time, then observer; prompt and subject id
/// make the order total.
pub(crate) fn export_order(positions: &HashMap<&str, usize>, a: &Observation, b: &Observation) -> Ordering {
    let pos = |o: &Observation| positions.get(o.subject_id.as_str()).copied().unwrap_or(usize::MAX);
    pos(a)
        .cmp(&pos(b))
        .then(a.logged_at.cmp(&b.logged_at))
        .then_with(|| a.observer_id.cmp(&b.observer_id))
        .then(a.prompt_index.cmp(&b.prompt_index))
        .then_with(|| a.subject_id.cmp(&b.subject_id))
}

/// Export rows for a session.
pub fn to_rows(state: &SessionState) -> ExportTable {
    rows_from(state.config(), state.observations())
}

/// Export rows for an arbitrary set of observations recorded under `config`.
pub fn rows_from(config: &SessionConfig, observations: &[Observation]) -> ExportTable {
    let positions = roster_positions(config);
    let mut sorted: Vec<&Observation> = observations.iter().collect();
    sorted.sort_by(|a, b| export_order(&positions, a, b));

    let rows = sorted
        .into_iter()
        .map(|o| ExportRow {
            session_id: config.session_id.clone(),
            subject_id: o.subject_id.clone(),
            subject_name: config
                .roster
                .get(&o.subject_id)
                .map(|s| s.display_name.clone())
                .unwrap_or_default(),
            observer_id: o.observer_id.clone(),
            prompt_index: o.prompt_index,
            timestamp: o.logged_at,
            status: o.status,
            cells: config
                .scheme
                .groups
                .iter()
                .map(|g| {
                    let chosen = o.selections.get(&g.name);
                    g.labels
                        .iter()
                        .filter(|l| chosen.is_some_and(|set| set.contains(*l)))
                        .map(String::as_str)
                        .collect::<Vec<_>>()
                        .join(&MULTI_LABEL_SEPARATOR.to_string())
                })
                .collect(),
        })
        .collect();

    ExportTable {
        groups: config.scheme.groups.iter().map(|g| g.name.clone()).collect(),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Csv,
    Xlsx,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "xlsx" => Some(Format::Xlsx),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Xlsx => "xlsx",
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            Format::Csv => "text/csv; charset=utf-8",
            Format::Xlsx => "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
        }
    }

    pub fn render(self, table: &ExportTable) -> Vec<u8> {
        match self {
            Format::Csv => write_csv(table),
            Format::Xlsx => write_xlsx(table),
        }
    }
}

//! Merging journals recorded for the same session definition, e.g. when
//! observers ran the same study on separate servers.
//!
//! Observations are unioned by [`SubmissionKey`]. Identical duplicates
//! collapse silently; a key recorded with different payloads in two sources
//! is a conflict, excluded from the merged data and reported.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::export::{export_order, roster_positions};
use crate::journal::{self, JournalError};
use crate::model::{Observation, SessionConfig, SubmissionKey};
use crate::session::SessionState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeConflict {
    pub key: SubmissionKey,
    /// The first two sources found disagreeing on `key`.
    pub sources: (String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub sources: Vec<String>,
    pub rows_merged: usize,
    pub conflicts: Vec<MergeConflict>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedDataset {
    pub config: SessionConfig,
    /// Observations in export order.
    pub observations: Vec<Observation>,
    pub report: MergeReport,
}

#[derive(Debug, thiserror::Error)]
pub enum MergeError {
    #[error("nothing to merge")]
    NoSources,
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Journal { path: PathBuf, source: JournalError },
    #[error("{other} records a different session definition than {first}")]
    ConfigMismatch { first: String, other: String },
}

/// Merges already-replayed sessions, each labelled for reporting.
pub fn merge_states(sources: &[(String, SessionState)]) -> Result<MergedDataset, MergeError> {
    let (first_label, first) = sources.first().ok_or(MergeError::NoSources)?;
    let config = first.config().clone();
    if let Some((label, _)) = sources.iter().find(|(_, s)| s.config() != &config) {
        return Err(MergeError::ConfigMismatch {
            first: first_label.clone(),
            other: label.clone(),
        });
    }

    // key -> (observation, source index), or a conflict once one is found
    let mut seen: BTreeMap<SubmissionKey, (Observation, usize)> = BTreeMap::new();
    let mut conflicts: BTreeMap<SubmissionKey, (usize, usize)> = BTreeMap::new();
    for (i, (_, state)) in sources.iter().enumerate() {
        for o in state.observations() {
            let key = o.key();
            match seen.get(&key) {
                None => {
                    seen.insert(key, (o.clone(), i));
                }
                Some((existing, _)) if existing == o => {}
                Some((_, j)) => {
                    conflicts.entry(key).or_insert((*j, i));
                }
            }
        }
    }

    let positions = roster_positions(&config);
    let mut observations: Vec<Observation> = seen
        .into_iter()
        .filter(|(k, _)| !conflicts.contains_key(k))
        .map(|(_, (o, _))| o)
        .collect();
    observations.sort_by(|a, b| export_order(&positions, a, b));

    let report = MergeReport {
        sources: sources.iter().map(|(l, _)| l.clone()).collect(),
        rows_merged: observations.len(),
        conflicts: conflicts
            .into_iter()
            .map(|(key, (a, b))| MergeConflict {
                key,
                sources: (sources[a].0.clone(), sources[b].0.clone()),
            })
            .collect(),
    };
    Ok(MergedDataset {
        config,
        observations,
        report,
    })
}

/// Replays each journal file and merges the results. Any corruption before a
/// journal's tail aborts the merge.
pub fn merge_journals<P: AsRef<Path>>(paths: &[P]) -> Result<MergedDataset, MergeError> {
    let mut sources = Vec::with_capacity(paths.len());
    for path in paths {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| MergeError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let (state, _) = journal::replay(&bytes).map_err(|source| MergeError::Journal {
            path: path.to_path_buf(),
            source,
        })?;
        sources.push((path.display().to_string(), state));
    }
    merge_states(&sources)
}

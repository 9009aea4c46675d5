//! Session domain types: label schemes, rosters, timer policy, observations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

/// Default prompt interval.
pub const DEFAULT_INTERVAL_MS: u64 = 10_000;

/// Shortest interval a human observer can be expected to keep up with.
pub const MIN_INTERVAL_MS: u64 = 500;

/// Joins the labels of a multiple-selection group in exported cells.
pub const MULTI_LABEL_SEPARATOR: char = ';';

/// How many labels an observer picks from a group at each prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Radio buttons: exactly one label per logged observation.
    Single,
    /// Checklist: any subset of the labels, including none.
    Multiple,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoryGroup {
    pub name: String,
    pub labels: Vec<String>,
    pub selection: Selection,
}

impl CategoryGroup {
    pub fn has_label(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Position of `label` within the group, used to order multi-select cells.
    pub fn label_position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelScheme {
    pub groups: Vec<CategoryGroup>,
}

impl LabelScheme {
    pub fn group(&self, name: &str) -> Option<&CategoryGroup> {
        self.groups.iter().find(|g| g.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Roster {
    pub subjects: Vec<Subject>,
}

impl Roster {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn position(&self, subject_id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s.id == subject_id)
    }

    pub fn get(&self, subject_id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.id == subject_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimerPolicy {
    pub interval_ms: u64,
}

impl Default for TimerPolicy {
    fn default() -> Self {
        TimerPolicy {
            interval_ms: DEFAULT_INTERVAL_MS,
        }
    }
}

impl TimerPolicy {
    pub fn interval_millis(&self) -> i64 {
        self.interval_ms as i64
    }
}

/// How prompts pick their target subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulingMode {
    /// One subject for the whole session.
    SingleSubject,
    /// Prompt `k` targets `roster[k mod |roster|]`.
    RoundRobin,
    /// Prompts carry no subject; the observer chooses.
    FreeSelect,
}

/// Frozen description of one observation study.
///
/// Build one through [`crate::config::validate_config`] (or check a
/// hand-built value with [`SessionConfig::validate`]); the rest of the crate
/// assumes every invariant holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub title: String,
    pub scheme: LabelScheme,
    pub roster: Roster,
    pub timer: TimerPolicy,
    pub scheduling_mode: SchedulingMode,
    pub observer_ids: Vec<String>,
    pub created_at: Timestamp,
}

impl SessionConfig {
    pub fn has_observer(&self, observer_id: &str) -> bool {
        self.observer_ids.iter().any(|o| o == observer_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationStatus {
    Logged,
    Missed,
    Skipped,
}

impl ObservationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ObservationStatus::Logged => "logged",
            ObservationStatus::Missed => "missed",
            ObservationStatus::Skipped => "skipped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "logged" => Some(ObservationStatus::Logged),
            "missed" => Some(ObservationStatus::Missed),
            "skipped" => Some(ObservationStatus::Skipped),
            _ => None,
        }
    }
}

/// Group name to the set of labels chosen from that group.
pub type Selections = BTreeMap<String, BTreeSet<String>>;

/// One observer's record of one subject at one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub observer_id: String,
    pub subject_id: String,
    pub prompt_index: u64,
    pub logged_at: Timestamp,
    #[serde(default)]
    pub selections: Selections,
    pub status: ObservationStatus,
}

impl Observation {
    pub fn key(&self) -> SubmissionKey {
        SubmissionKey {
            observer_id: self.observer_id.clone(),
            prompt_index: self.prompt_index,
            subject_id: self.subject_id.clone(),
        }
    }
}

/// At most one observation is accepted per key in a session.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubmissionKey {
    pub observer_id: String,
    pub prompt_index: u64,
    pub subject_id: String,
}

impl std::fmt::Display for SubmissionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, prompt {}, {})",
            self.observer_id, self.prompt_index, self.subject_id
        )
    }
}

/// Convenience builder for a selections map.
pub fn selections<'a, I, L>(entries: I) -> Selections
where
    I: IntoIterator<Item = (&'a str, L)>,
    L: IntoIterator<Item = &'a str>,
{
    entries
        .into_iter()
        .map(|(group, labels)| {
            (
                group.to_string(),
                labels.into_iter().map(str::to_string).collect(),
            )
        })
        .collect()
}

//! The session state machine.
//!
//! A session moves `created → running → ended`. Everything that happens to it
//! is a [`SessionEvent`], and [`SessionState::apply`] is the single reducer
//! used both by the live service and by journal replay, so a replayed state is
//! equal to the live one by construction.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::config::Violation;
use crate::model::{Observation, ObservationStatus, Selection, SessionConfig, SubmissionKey};
use crate::scheduler::PromptSpec;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Created,
    Running,
    Ended,
}

/// Something that happened to a session. Each variant is one journal entry kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionEvent {
    ConfigSnapshot(SessionConfig),
    SessionStarted { started_at: Timestamp },
    PromptOpened(PromptSpec),
    PromptExpired(PromptSpec),
    ObservationLogged(Observation),
    SessionEnded { ended_at: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("invalid config: {}", join(.0))]
    InvalidConfig(Vec<Violation>),
    #[error("already running")]
    AlreadyRunning,
    #[error("session ended")]
    SessionEnded,
    #[error("session not running")]
    NotRunning,
    #[error("config is frozen once the session has started")]
    ConfigFrozen,
    #[error("a config snapshot may only open a session")]
    UnexpectedSnapshot,
    #[error("unknown subject {0:?}")]
    UnknownSubject(String),
    #[error("unknown observer {0:?}")]
    UnknownObserver(String),
    #[error("unknown category group {0:?}")]
    UnknownGroup(String),
    #[error("label {label:?} is not in group {group:?}")]
    UnknownLabel { group: String, label: String },
    #[error("single-selection group {group:?} needs exactly one label, got {count}")]
    SingleSelectionCardinality { group: String, count: usize },
    #[error("{0} observations must not carry selections")]
    SelectionsOnUnlogged(&'static str),
    #[error("duplicate submission for {0}")]
    DuplicateSubmission(SubmissionKey),
    #[error("prompt {got} opened out of order, expected {expected}")]
    PromptOutOfOrder { expected: u64, got: u64 },
    #[error("prompt {0} was never opened")]
    UnknownPrompt(u64),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    config: SessionConfig,
    phase: Phase,
    started_at: Option<Timestamp>,
    ended_at: Option<Timestamp>,
    prompts_issued: u64,
    observations: Vec<Observation>,
    keys: HashSet<SubmissionKey>,
}

/// Validates `config`, then starts a session at `start_time`. Returns the
/// running state and the events to journal (config snapshot, start).
pub fn start_session(
    config: SessionConfig,
    start_time: Timestamp,
) -> Result<(SessionState, [SessionEvent; 2]), SessionError> {
    let created = SessionState::created(config)?;
    let snapshot = created.snapshot_event();
    let (running, started) = created.start(start_time)?;
    Ok((running, [snapshot, started]))
}

impl SessionState {
    /// A fresh session in the `created` phase.
    pub fn created(config: SessionConfig) -> Result<Self, SessionError> {
        config.validate().map_err(SessionError::InvalidConfig)?;
        Ok(SessionState {
            config,
            phase: Phase::Created,
            started_at: None,
            ended_at: None,
            prompts_issued: 0,
            observations: Vec::new(),
            keys: HashSet::new(),
        })
    }

    /// Folds a full event sequence, which must open with a config snapshot.
    pub fn from_events<'a, I>(events: I) -> Result<Self, SessionError>
    where
        I: IntoIterator<Item = &'a SessionEvent>,
    {
        let mut events = events.into_iter();
        let mut state = match events.next() {
            Some(SessionEvent::ConfigSnapshot(config)) => SessionState::created(config.clone())?,
            _ => return Err(SessionError::UnexpectedSnapshot),
        };
        for event in events {
            state.apply(event)?;
        }
        Ok(state)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn started_at(&self) -> Option<Timestamp> {
        self.started_at
    }

    pub fn ended_at(&self) -> Option<Timestamp> {
        self.ended_at
    }

    pub fn prompts_issued(&self) -> u64 {
        self.prompts_issued
    }

    /// Observations in the order they were accepted.
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn contains_key(&self, key: &SubmissionKey) -> bool {
        self.keys.contains(key)
    }

    pub fn snapshot_event(&self) -> SessionEvent {
        SessionEvent::ConfigSnapshot(self.config.clone())
    }

    /// Swaps the config of a session that has not started yet.
    pub fn replace_config(&mut self, config: SessionConfig) -> Result<(), SessionError> {
        if self.phase != Phase::Created {
            return Err(SessionError::ConfigFrozen);
        }
        config.validate().map_err(SessionError::InvalidConfig)?;
        self.config = config;
        Ok(())
    }

    pub fn start(&self, at: Timestamp) -> Result<(SessionState, SessionEvent), SessionError> {
        let event = SessionEvent::SessionStarted { started_at: at };
        let mut next = self.clone();
        next.apply(&event)?;
        Ok((next, event))
    }

    pub fn end(&self, at: Timestamp) -> Result<(SessionState, SessionEvent), SessionError> {
        let event = SessionEvent::SessionEnded { ended_at: at };
        let mut next = self.clone();
        next.apply(&event)?;
        Ok((next, event))
    }

    /// Pure form of the observation reducer: returns the successor state, or
    /// the reason `obs` was rejected.
    pub fn apply_observation(&self, obs: Observation) -> Result<SessionState, SessionError> {
        let mut next = self.clone();
        next.apply(&SessionEvent::ObservationLogged(obs))?;
        Ok(next)
    }

    /// Checks `obs` against the session without changing anything.
    pub fn check_observation(&self, obs: &Observation) -> Result<(), SessionError> {
        self.require_running()?;
        let config = &self.config;
        if config.roster.position(&obs.subject_id).is_none() {
            return Err(SessionError::UnknownSubject(obs.subject_id.clone()));
        }
        if !config.has_observer(&obs.observer_id) {
            return Err(SessionError::UnknownObserver(obs.observer_id.clone()));
        }
        match obs.status {
            ObservationStatus::Logged => {
                for (group_name, labels) in &obs.selections {
                    let group = config
                        .scheme
                        .group(group_name)
                        .ok_or_else(|| SessionError::UnknownGroup(group_name.clone()))?;
                    if let Some(label) = labels.iter().find(|l| !group.has_label(l)) {
                        return Err(SessionError::UnknownLabel {
                            group: group_name.clone(),
                            label: label.clone(),
                        });
                    }
                }
                for group in &config.scheme.groups {
                    if group.selection == Selection::Single {
                        let count = obs.selections.get(&group.name).map_or(0, |s| s.len());
                        if count != 1 {
                            return Err(SessionError::SingleSelectionCardinality {
                                group: group.name.clone(),
                                count,
                            });
                        }
                    }
                }
            }
            status => {
                if !obs.selections.is_empty() {
                    return Err(SessionError::SelectionsOnUnlogged(status.as_str()));
                }
            }
        }
        if self.keys.contains(&obs.key()) {
            return Err(SessionError::DuplicateSubmission(obs.key()));
        }
        Ok(())
    }

    /// In-place reducer. On error the state is left untouched.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), SessionError> {
        match event {
            SessionEvent::ConfigSnapshot(_) => return Err(SessionError::UnexpectedSnapshot),
            SessionEvent::SessionStarted { started_at } => {
                match self.phase {
                    Phase::Created => {}
                    Phase::Running => return Err(SessionError::AlreadyRunning),
                    Phase::Ended => return Err(SessionError::SessionEnded),
                }
                self.phase = Phase::Running;
                self.started_at = Some(*started_at);
            }
            SessionEvent::PromptOpened(prompt) => {
                self.require_running()?;
                if prompt.prompt_index != self.prompts_issued {
                    return Err(SessionError::PromptOutOfOrder {
                        expected: self.prompts_issued,
                        got: prompt.prompt_index,
                    });
                }
                self.prompts_issued += 1;
            }
            SessionEvent::PromptExpired(prompt) => {
                self.require_running()?;
                if prompt.prompt_index >= self.prompts_issued {
                    return Err(SessionError::UnknownPrompt(prompt.prompt_index));
                }
            }
            SessionEvent::ObservationLogged(obs) => {
                self.check_observation(obs)?;
                self.keys.insert(obs.key());
                self.observations.push(obs.clone());
            }
            SessionEvent::SessionEnded { ended_at } => {
                self.require_running()?;
                self.phase = Phase::Ended;
                self.ended_at = Some(*ended_at);
            }
        }
        Ok(())
    }

    fn require_running(&self) -> Result<(), SessionError> {
        match self.phase {
            Phase::Running => Ok(()),
            Phase::Created => Err(SessionError::NotRunning),
            Phase::Ended => Err(SessionError::SessionEnded),
        }
    }
}

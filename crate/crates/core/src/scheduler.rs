//! Interval prompt scheduling against a caller-supplied clock.
//!
//! Prompt `k` is due at `start + k * interval` and stays open for one full
//! interval, so its deadline is the next prompt's due time. The scheduler
//! never reads the system clock: the caller passes `now` into [`SchedulerState::advance`],
//! which makes every schedule reproducible on virtual time.

use serde::{Deserialize, Serialize};

use crate::model::{ObservationStatus, SchedulingMode, SessionConfig};
use crate::time::Timestamp;

/// One scheduled observation opportunity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_index: u64,
    /// Target subject; absent in free-select mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
    pub due_at: Timestamp,
    pub deadline: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulerEvent {
    PromptOpened(PromptSpec),
    PromptExpired(PromptSpec),
}

/// How an observer closed a prompt before its deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptOutcome {
    Logged,
    Skipped,
}

impl From<PromptOutcome> for ObservationStatus {
    fn from(outcome: PromptOutcome) -> Self {
        match outcome {
            PromptOutcome::Logged => ObservationStatus::Logged,
            PromptOutcome::Skipped => ObservationStatus::Skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchedulerError {
    #[error("clock went backwards: {now} is earlier than {last}")]
    NonMonotone { last: Timestamp, now: Timestamp },
    #[error("prompt {requested} is not open (open prompt: {open:?})")]
    NotOpen { requested: u64, open: Option<u64> },
}

/// The prompt with the given index. Total for any index on a valid config.
pub fn prompt_at(config: &SessionConfig, session_start: Timestamp, index: u64) -> PromptSpec {
    let interval = config.timer.interval_millis();
    let due_at = session_start + index as i64 * interval;
    let roster = &config.roster.subjects;
    let subject_id = match config.scheduling_mode {
        SchedulingMode::RoundRobin => Some(roster[(index % roster.len() as u64) as usize].id.clone()),
        SchedulingMode::SingleSubject => Some(roster[0].id.clone()),
        SchedulingMode::FreeSelect => None,
    };
    PromptSpec {
        prompt_index: index,
        subject_id,
        due_at,
        deadline: due_at + interval,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerState {
    session_start: Timestamp,
    next_index: u64,
    open_prompt: Option<PromptSpec>,
    last_now: Option<Timestamp>,
}

impl SchedulerState {
    pub fn new(session_start: Timestamp) -> Self {
        SchedulerState {
            session_start,
            next_index: 0,
            open_prompt: None,
            last_now: None,
        }
    }

    /// Rebuilds a scheduler from persisted facts (e.g. after journal replay).
    pub fn restore(
        session_start: Timestamp,
        next_index: u64,
        open_prompt: Option<PromptSpec>,
        last_now: Option<Timestamp>,
    ) -> Self {
        SchedulerState {
            session_start,
            next_index,
            open_prompt,
            last_now,
        }
    }

    pub fn session_start(&self) -> Timestamp {
        self.session_start
    }

    /// Number of prompts emitted so far.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    pub fn open_prompt(&self) -> Option<&PromptSpec> {
        self.open_prompt.as_ref()
    }

    pub fn last_now(&self) -> Option<Timestamp> {
        self.last_now
    }

    /// Moves the schedule forward to `now`, returning expirations and
    /// openings in index order. After a stall spanning several intervals the
    /// skipped prompts are opened and expired in turn, so no index is ever
    /// skipped or repeated. The state is unchanged on error.
    pub fn advance(
        &mut self,
        config: &SessionConfig,
        now: Timestamp,
    ) -> Result<Vec<SchedulerEvent>, SchedulerError> {
        if let Some(last) = self.last_now {
            if now < last {
                return Err(SchedulerError::NonMonotone { last, now });
            }
        }
        self.last_now = Some(now);

        let mut events = Vec::new();
        loop {
            if let Some(open) = &self.open_prompt {
                if now < open.deadline {
                    break;
                }
                events.push(SchedulerEvent::PromptExpired(open.clone()));
                self.open_prompt = None;
            }
            let next = prompt_at(config, self.session_start, self.next_index);
            if next.due_at > now {
                break;
            }
            events.push(SchedulerEvent::PromptOpened(next.clone()));
            self.open_prompt = Some(next);
            self.next_index += 1;
        }
        Ok(events)
    }

    /// Closes the open prompt early; it will not produce an expiration.
    pub fn resolve_prompt(
        &mut self,
        prompt_index: u64,
        outcome: PromptOutcome,
    ) -> Result<ObservationStatus, SchedulerError> {
        match &self.open_prompt {
            Some(open) if open.prompt_index == prompt_index => {
                self.open_prompt = None;
                Ok(outcome.into())
            }
            other => Err(SchedulerError::NotOpen {
                requested: prompt_index,
                open: other.as_ref().map(|p| p.prompt_index),
            }),
        }
    }
}

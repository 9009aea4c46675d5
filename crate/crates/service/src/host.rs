//! One hosted session. Every state change of a session goes through its
//! [`SessionHost`], which journals it before applying it and then publishes
//! it to stream subscribers.

use std::collections::{HashMap, HashSet};

use dlot_core::journal::{DurableSink, JournalEntry, JournalError, JournalWriter};
use dlot_core::{
    prompt_at, Observation, ObservationStatus, Phase, PromptOutcome, PromptSpec, SchedulerEvent,
    SchedulerState, SchedulingMode, Selections, SessionConfig, SessionError, SessionEvent,
    SessionState, SubmissionKey, Timestamp,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::events::StreamEvent;

/// Stream messages buffered per session before a slow subscriber lags.
pub const EVENT_BUFFER: usize = 1024;

/// Bearer credential of one observer in one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub observer_id: String,
    pub token: String,
}

fn new_token() -> String {
    format!("{:032x}", rand::rng().random::<u128>())
}

/// Body of an observation submission. The observer comes from the token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub prompt_index: u64,
    /// Required in free-select sessions; otherwise optional and checked
    /// against the prompt's subject.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
    #[serde(default)]
    pub selections: Selections,
    #[serde(default = "logged")]
    pub status: PromptOutcome,
    /// Informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_sent_at: Option<Timestamp>,
}

fn logged() -> PromptOutcome {
    PromptOutcome::Logged
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub key: SubmissionKey,
    pub status: ObservationStatus,
    pub logged_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submitted {
    pub ack: Ack,
    /// The key had already been accepted with the same payload.
    pub duplicate: bool,
}

#[derive(Debug, Clone, Copy)]
struct AckRecord {
    seq: u64,
    index: usize,
}

/// Sizes of everything the host keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Footprint {
    pub observations: usize,
    pub acknowledgements: usize,
    pub credentials: usize,
    pub answered_current: usize,
    pub open_prompts: usize,
    pub journal_entries: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum HostError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("journal write failed: {0}")]
    Storage(#[from] JournalError),
    #[error("{0} is not an observer of this session")]
    UnknownObserver(String),
    #[error("observer {0} has already joined")]
    AlreadyJoined(String),
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("invalid or missing observer token")]
    Unauthorized,
    #[error(transparent)]
    NotRunning(SessionError),
    #[error("prompt {prompt_index} closed at {deadline}")]
    Late {
        prompt_index: u64,
        deadline: Timestamp,
    },
    #[error("prompt {0} has not been issued")]
    UnknownPrompt(u64),
    #[error("prompt {prompt_index} targets subject {expected}")]
    WrongSubject { prompt_index: u64, expected: String },
    #[error("subject_id is required in free-select sessions")]
    MissingSubject,
    #[error(transparent)]
    Invalid(SessionError),
    #[error("{0} was already submitted with a different payload")]
    KeyConflict(SubmissionKey),
    #[error("journal write failed: {0}")]
    Storage(JournalError),
    #[error("{0}")]
    Internal(String),
}

impl From<HostError> for SubmitError {
    fn from(e: HostError) -> Self {
        match e {
            HostError::Storage(e) => SubmitError::Storage(e),
            HostError::Session(e) => SubmitError::NotRunning(e),
            other => SubmitError::Internal(other.to_string()),
        }
    }
}

pub struct SessionHost<S: DurableSink> {
    state: SessionState,
    journal: JournalWriter<S>,
    scheduler: Option<SchedulerState>,
    /// The most recently opened prompt until it expires or is superseded.
    current: Option<PromptSpec>,
    /// Observers who answered `current`.
    answered: HashSet<String>,
    tokens: HashMap<String, String>,
    joined: HashMap<String, String>,
    acks: HashMap<SubmissionKey, AckRecord>,
    last_seen: Timestamp,
    events: broadcast::Sender<StreamEvent>,
}

impl<S: DurableSink> SessionHost<S> {
    /// Hosts a new session, journaling its config snapshot.
    pub fn create(config: SessionConfig, journal: JournalWriter<S>, now: Timestamp) -> Result<Self, HostError> {
        let state = SessionState::created(config)?;
        let mut host = Self::assemble(state, journal, now);
        let snapshot = host.state.snapshot_event();
        host.journal.append_event(now, snapshot)?;
        Ok(host)
    }

    /// Rebuilds a host from the entries already in `journal`.
    pub fn recover(journal: JournalWriter<S>, entries: &[JournalEntry]) -> Result<Self, HostError> {
        let state = SessionState::from_events(entries.iter().map(|e| &e.event))?;
        let last_seen = entries.last().map_or(Timestamp::from_millis(0), |e| e.ts);
        let mut host = Self::assemble(state, journal, last_seen);

        let mut observation_count = 0;
        for entry in entries {
            match &entry.event {
                SessionEvent::PromptOpened(p) => {
                    host.current = Some(p.clone());
                    host.answered.clear();
                }
                SessionEvent::PromptExpired(p) => {
                    if host.current.as_ref().is_some_and(|c| c.prompt_index == p.prompt_index) {
                        host.current = None;
                    }
                }
                SessionEvent::ObservationLogged(o) => {
                    if o.status != ObservationStatus::Missed {
                        host.acks.insert(
                            o.key(),
                            AckRecord {
                                seq: entry.seq,
                                index: observation_count,
                            },
                        );
                        if host.current.as_ref().is_some_and(|c| c.prompt_index == o.prompt_index) {
                            host.answered.insert(o.observer_id.clone());
                        }
                    }
                    observation_count += 1;
                }
                _ => {}
            }
        }

        if host.state.phase() == Phase::Running {
            let open = host.current.clone().filter(|_| !host.all_answered());
            host.scheduler = Some(SchedulerState::restore(
                host.state.started_at().expect("running session has a start"),
                host.state.prompts_issued(),
                open,
                Some(last_seen),
            ));
        } else {
            host.current = None;
            host.answered.clear();
        }
        Ok(host)
    }

    fn assemble(state: SessionState, journal: JournalWriter<S>, now: Timestamp) -> Self {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        SessionHost {
            state,
            journal,
            scheduler: None,
            current: None,
            answered: HashSet::new(),
            tokens: HashMap::new(),
            joined: HashMap::new(),
            acks: HashMap::new(),
            last_seen: now,
            events,
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn config(&self) -> &SessionConfig {
        self.state.config()
    }

    pub fn scheduler(&self) -> Option<&SchedulerState> {
        self.scheduler.as_ref()
    }

    pub fn current_prompt(&self) -> Option<&PromptSpec> {
        self.current.as_ref()
    }

    pub fn journal(&self) -> &JournalWriter<S> {
        &self.journal
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.events.subscribe()
    }

    pub fn footprint(&self) -> Footprint {
        Footprint {
            observations: self.state.observations().len(),
            acknowledgements: self.acks.len(),
            credentials: self.tokens.len(),
            answered_current: self.answered.len(),
            open_prompts: usize::from(self.current.is_some()),
            journal_entries: self.journal.len(),
        }
    }

    /// Issues a token for `observer_id`. Each observer joins once.
    pub fn join(&mut self, observer_id: &str) -> Result<Credential, HostError> {
        if !self.config().has_observer(observer_id) {
            return Err(HostError::UnknownObserver(observer_id.to_string()));
        }
        if self.joined.contains_key(observer_id) {
            return Err(HostError::AlreadyJoined(observer_id.to_string()));
        }
        let token = new_token();
        self.tokens.insert(token.clone(), observer_id.to_string());
        self.joined.insert(observer_id.to_string(), token.clone());
        Ok(Credential {
            observer_id: observer_id.to_string(),
            token,
        })
    }

    pub fn observer_for(&self, token: &str) -> Option<&str> {
        self.tokens.get(token).map(String::as_str)
    }

    pub fn has_joined(&self, observer_id: &str) -> bool {
        self.joined.contains_key(observer_id)
    }

    /// Clamps `now` so time never runs backwards inside the session.
    fn observe_time(&mut self, now: Timestamp) -> Timestamp {
        self.last_seen = self.last_seen.max(now);
        self.last_seen
    }

    fn record(&mut self, ts: Timestamp, event: SessionEvent) -> Result<u64, HostError> {
        let seq = self.journal.append_event(ts, event.clone())?;
        self.state.apply(&event)?;
        Ok(seq)
    }

    fn publish(&self, event: StreamEvent) {
        // no subscribers is fine
        let _ = self.events.send(event);
    }

    fn all_answered(&self) -> bool {
        self.config().scheduling_mode != SchedulingMode::FreeSelect
            && self.config().observer_ids.iter().all(|o| self.answered.contains(o))
    }

    fn subject_name(&self, prompt: &PromptSpec) -> Option<String> {
        let id = prompt.subject_id.as_deref()?;
        self.config().roster.get(id).map(|s| s.display_name.clone())
    }

    pub fn start(&mut self, now: Timestamp) -> Result<Timestamp, HostError> {
        let now = self.observe_time(now);
        let (_, event) = self.state.start(now)?;
        self.record(now, event)?;
        self.scheduler = Some(SchedulerState::new(now));
        self.tick(now)?;
        Ok(now)
    }

    /// Brings the schedule up to `now`: expires overdue prompts, recording a
    /// missed observation for every observer who did not answer, and opens
    /// the prompts that have come due.
    pub fn tick(&mut self, now: Timestamp) -> Result<(), HostError> {
        let now = self.observe_time(now);
        let Some(scheduler) = self.scheduler.as_mut() else {
            return Ok(());
        };
        let events = scheduler
            .advance(self.state.config(), now)
            .expect("host clock is monotone");
        for event in events {
            match event {
                SchedulerEvent::PromptOpened(p) => self.open(now, p)?,
                SchedulerEvent::PromptExpired(p) => {
                    let missed_at = p.deadline;
                    self.expire(now, p, missed_at)?
                }
            }
        }
        Ok(())
    }

    fn open(&mut self, now: Timestamp, prompt: PromptSpec) -> Result<(), HostError> {
        self.record(now, SessionEvent::PromptOpened(prompt.clone()))?;
        self.answered.clear();
        self.publish(StreamEvent::PromptOpened {
            subject_name: self.subject_name(&prompt),
            prompts_issued: self.state.prompts_issued(),
            prompt: prompt.clone(),
            replay: false,
            answered: false,
        });
        self.current = Some(prompt);
        Ok(())
    }

    fn expire(&mut self, now: Timestamp, prompt: PromptSpec, missed_at: Timestamp) -> Result<(), HostError> {
        self.record(now, SessionEvent::PromptExpired(prompt.clone()))?;
        if let Some(subject) = &prompt.subject_id {
            let silent: Vec<String> = self
                .config()
                .observer_ids
                .iter()
                .filter(|o| !self.answered.contains(*o))
                .cloned()
                .collect();
            for observer_id in silent {
                let missed = Observation {
                    observer_id,
                    subject_id: subject.clone(),
                    prompt_index: prompt.prompt_index,
                    logged_at: missed_at,
                    selections: Selections::new(),
                    status: ObservationStatus::Missed,
                };
                self.record(now, SessionEvent::ObservationLogged(missed))?;
            }
        }
        self.current = None;
        self.answered.clear();
        self.publish(StreamEvent::PromptExpired { prompt });
        Ok(())
    }

    /// Ends the session. A prompt still open is expired first and its
    /// missing answers are recorded at the end time.
    pub fn end(&mut self, now: Timestamp) -> Result<Timestamp, HostError> {
        let now = self.observe_time(now);
        self.tick(now)?;
        if self.state.phase() != Phase::Running {
            return Err(self.state.end(now).unwrap_err().into());
        }
        let open = self.scheduler.as_ref().and_then(|s| s.open_prompt().cloned());
        if let Some(prompt) = open {
            self.expire(now, prompt, now)?;
        }
        self.record(now, SessionEvent::SessionEnded { ended_at: now })?;
        self.scheduler = None;
        self.current = None;
        self.publish(StreamEvent::SessionEnded { ended_at: now });
        Ok(now)
    }

    fn ack(&self, record: AckRecord) -> Ack {
        let o = &self.state.observations()[record.index];
        Ack {
            seq: record.seq,
            key: o.key(),
            status: o.status,
            logged_at: o.logged_at,
        }
    }

    /// Accepts one observation. Retransmitting an accepted submission returns
    /// the original acknowledgement without journaling anything, even after
    /// the prompt has closed.
    pub fn submit(&mut self, now: Timestamp, token: &str, req: &SubmitRequest) -> Result<Submitted, SubmitError> {
        let observer_id = self.observer_for(token).ok_or(SubmitError::Unauthorized)?.to_string();
        let now = self.observe_time(now);
        self.tick(now)?;

        let phase = self.state.phase();
        if phase == Phase::Created {
            return Err(SubmitError::NotRunning(SessionError::NotRunning));
        }
        if req.prompt_index >= self.state.prompts_issued() {
            return Err(match phase {
                Phase::Ended => SubmitError::NotRunning(SessionError::SessionEnded),
                _ => SubmitError::UnknownPrompt(req.prompt_index),
            });
        }
        let started = self.state.started_at().expect("started session");
        let prompt = prompt_at(self.config(), started, req.prompt_index);
        let subject_id = match (&prompt.subject_id, &req.subject_id) {
            (Some(expected), Some(given)) if expected != given => {
                return Err(SubmitError::WrongSubject {
                    prompt_index: prompt.prompt_index,
                    expected: expected.clone(),
                })
            }
            (Some(expected), _) => expected.clone(),
            (None, Some(given)) => given.clone(),
            (None, None) => return Err(SubmitError::MissingSubject),
        };
        let key = SubmissionKey {
            observer_id: observer_id.clone(),
            prompt_index: req.prompt_index,
            subject_id: subject_id.clone(),
        };
        let status = ObservationStatus::from(req.status);

        if let Some(record) = self.acks.get(&key).copied() {
            let previous = &self.state.observations()[record.index];
            if previous.selections == req.selections && previous.status == status {
                return Ok(Submitted {
                    ack: self.ack(record),
                    duplicate: true,
                });
            }
            return Err(SubmitError::KeyConflict(key));
        }
        if phase == Phase::Ended {
            return Err(SubmitError::NotRunning(SessionError::SessionEnded));
        }
        let open = self
            .current
            .as_ref()
            .is_some_and(|c| c.prompt_index == req.prompt_index && now < c.deadline);
        if !open {
            return Err(SubmitError::Late {
                prompt_index: req.prompt_index,
                deadline: prompt.deadline,
            });
        }

        let observation = Observation {
            observer_id: observer_id.clone(),
            subject_id,
            prompt_index: req.prompt_index,
            logged_at: now,
            selections: req.selections.clone(),
            status,
        };
        self.state.check_observation(&observation).map_err(SubmitError::Invalid)?;
        let seq = self.record(now, SessionEvent::ObservationLogged(observation))?;
        let record = AckRecord {
            seq,
            index: self.state.observations().len() - 1,
        };
        self.acks.insert(key, record);

        if self.config().scheduling_mode != SchedulingMode::FreeSelect {
            self.answered.insert(observer_id);
            if self.all_answered() {
                if let Some(scheduler) = self.scheduler.as_mut() {
                    // the prompt is answered by everyone; it no longer expires
                    let _ = scheduler.resolve_prompt(req.prompt_index, req.status);
                }
            }
        }
        Ok(Submitted {
            ack: self.ack(record),
            duplicate: false,
        })
    }

    /// The message a newly connected observer receives first: the open
    /// prompt, if any, flagged as a replay.
    pub fn replay_for(&self, observer_id: &str) -> Option<StreamEvent> {
        let prompt = self.current.as_ref()?;
        Some(StreamEvent::PromptOpened {
            prompt: prompt.clone(),
            subject_name: self.subject_name(prompt),
            prompts_issued: self.state.prompts_issued(),
            replay: true,
            answered: prompt.subject_id.is_some() && self.answered.contains(observer_id),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dlot_core::journal::{self, EntryKind};
    use dlot_core::testing::affect_config;
    use dlot_core::model::selections;
    use dlot_core::Selection;

    const T0: i64 = 1_700_000_000_000;

    fn t(ms: i64) -> Timestamp {
        Timestamp::from_millis(T0 + ms)
    }

    fn host(observers: &[&str]) -> SessionHost<Vec<u8>> {
        SessionHost::create(affect_config(3, observers), JournalWriter::new(Vec::new()), t(0)).unwrap()
    }

    fn running(observers: &[&str]) -> (SessionHost<Vec<u8>>, Vec<Credential>) {
        let mut h = host(observers);
        let creds = observers.iter().map(|o| h.join(o).unwrap()).collect();
        h.start(t(0)).unwrap();
        (h, creds)
    }

    fn answer(prompt: u64, label: &str) -> SubmitRequest {
        SubmitRequest {
            prompt_index: prompt,
            subject_id: None,
            selections: selections([("affect", [label])]),
            status: PromptOutcome::Logged,
            client_sent_at: None,
        }
    }

    fn kinds(h: &SessionHost<Vec<u8>>) -> Vec<EntryKind> {
        let (entries, report) = journal::read_entries(h.journal().get_ref()).unwrap();
        assert!(report.is_clean());
        entries.iter().map(JournalEntry::kind).collect()
    }

    #[test]
    fn start_opens_the_first_prompt() {
        let (h, _) = running(&["o1"]);
        assert_eq!(h.current_prompt().unwrap().prompt_index, 0);
        assert_eq!(
            kinds(&h),
            vec![EntryKind::ConfigSnapshot, EntryKind::SessionStarted, EntryKind::PromptOpened]
        );
    }

    #[test]
    fn tokens_are_distinct_and_observers_join_once() {
        let mut h = host(&["o1", "o2"]);
        let a = h.join("o1").unwrap();
        let b = h.join("o2").unwrap();
        assert_ne!(a.token, b.token);
        assert_eq!(a.token.len(), 32);
        assert!(matches!(h.join("o1"), Err(HostError::AlreadyJoined(_))));
        assert!(matches!(h.join("ghost"), Err(HostError::UnknownObserver(_))));
        assert_eq!(h.observer_for(&b.token), Some("o2"));
    }

    #[test]
    fn accepted_submission_is_journaled_once() {
        let (mut h, creds) = running(&["o1", "o2"]);
        let first = h.submit(t(1200), &creds[0].token, &answer(0, "engaged")).unwrap();
        assert!(!first.duplicate);
        assert_eq!(first.ack.logged_at, t(1200));
        assert_eq!(first.ack.key.subject_id, "s1");
        let entries_before = h.journal().len();
        let again = h.submit(t(1300), &creds[0].token, &answer(0, "engaged")).unwrap();
        assert!(again.duplicate);
        assert_eq!(again.ack, first.ack);
        assert_eq!(h.journal().len(), entries_before);
    }

    #[test]
    fn retransmission_after_deadline_returns_original_ack() {
        let (mut h, creds) = running(&["o1", "o2"]);
        let first = h.submit(t(100), &creds[0].token, &answer(0, "engaged")).unwrap();
        let later = h.submit(t(12_000), &creds[0].token, &answer(0, "engaged")).unwrap();
        assert!(later.duplicate);
        assert_eq!(later.ack, first.ack);
    }

    #[test]
    fn different_payload_for_same_key_conflicts() {
        let (mut h, creds) = running(&["o1", "o2"]);
        h.submit(t(100), &creds[0].token, &answer(0, "engaged")).unwrap();
        let err = h.submit(t(200), &creds[0].token, &answer(0, "boredom")).unwrap_err();
        assert!(matches!(err, SubmitError::KeyConflict(_)));
        assert_eq!(h.state().observations().len(), 1);
    }

    #[test]
    fn submission_one_ms_after_deadline_is_late_and_missed() {
        let (mut h, creds) = running(&["o1"]);
        // interval is 5000 ms in the fixture config
        let err = h.submit(t(5001), &creds[0].token, &answer(0, "engaged")).unwrap_err();
        assert!(matches!(err, SubmitError::Late { prompt_index: 0, .. }));
        let missed = &h.state().observations()[0];
        assert_eq!(missed.status, ObservationStatus::Missed);
        assert_eq!(missed.prompt_index, 0);
        assert_eq!(missed.logged_at, t(5000));
    }

    #[test]
    fn submission_at_deadline_is_late() {
        let (mut h, creds) = running(&["o1"]);
        assert!(matches!(
            h.submit(t(5000), &creds[0].token, &answer(0, "engaged")),
            Err(SubmitError::Late { .. })
        ));
        assert!(h.submit(t(5000), &creds[0].token, &answer(1, "engaged")).is_ok());
    }

    #[test]
    fn bad_token_and_validation_errors() {
        let (mut h, creds) = running(&["o1"]);
        assert!(matches!(
            h.submit(t(1), "nope", &answer(0, "engaged")),
            Err(SubmitError::Unauthorized)
        ));
        assert!(matches!(
            h.submit(t(1), &creds[0].token, &answer(0, "sleepy")),
            Err(SubmitError::Invalid(SessionError::UnknownLabel { .. }))
        ));
        assert!(matches!(
            h.submit(t(1), &creds[0].token, &answer(3, "engaged")),
            Err(SubmitError::UnknownPrompt(3))
        ));
        let mut wrong = answer(0, "engaged");
        wrong.subject_id = Some("s2".into());
        assert!(matches!(
            h.submit(t(1), &creds[0].token, &wrong),
            Err(SubmitError::WrongSubject { .. })
        ));
        assert_eq!(h.state().observations().len(), 0);
    }

    #[test]
    fn client_time_is_ignored() {
        let (mut h, creds) = running(&["o1"]);
        let mut req = answer(0, "neutral");
        req.client_sent_at = Some(t(-50_000));
        let ack = h.submit(t(900), &creds[0].token, &req).unwrap().ack;
        assert_eq!(ack.logged_at, t(900));
    }

    #[test]
    fn prompt_answered_by_everyone_does_not_expire() {
        let (mut h, creds) = running(&["o1", "o2"]);
        h.submit(t(10), &creds[0].token, &answer(0, "engaged")).unwrap();
        h.submit(t(20), &creds[1].token, &answer(0, "neutral")).unwrap();
        assert!(h.scheduler().unwrap().open_prompt().is_none());
        h.tick(t(5000)).unwrap();
        assert!(!kinds(&h).contains(&EntryKind::PromptExpired));
        assert_eq!(h.current_prompt().unwrap().prompt_index, 1);
    }

    #[test]
    fn partially_answered_prompt_records_misses() {
        let (mut h, creds) = running(&["o1", "o2", "o3"]);
        h.submit(t(10), &creds[1].token, &answer(0, "engaged")).unwrap();
        h.tick(t(5000)).unwrap();
        let missed: Vec<&str> = h
            .state()
            .observations()
            .iter()
            .filter(|o| o.status == ObservationStatus::Missed)
            .map(|o| o.observer_id.as_str())
            .collect();
        assert_eq!(missed, vec!["o1", "o3"]);
    }

    #[test]
    fn skipped_prompt_counts_as_answered() {
        let (mut h, creds) = running(&["o1"]);
        let mut skip = answer(0, "engaged");
        skip.selections.clear();
        skip.status = PromptOutcome::Skipped;
        let ack = h.submit(t(10), &creds[0].token, &skip).unwrap().ack;
        assert_eq!(ack.status, ObservationStatus::Skipped);
        h.tick(t(5000)).unwrap();
        assert_eq!(h.state().observations().len(), 1);
    }

    #[test]
    fn free_select_requires_subject_and_never_misses() {
        let mut cfg = affect_config(3, &["o1"]);
        cfg.scheduling_mode = SchedulingMode::FreeSelect;
        let mut h = SessionHost::create(cfg, JournalWriter::new(Vec::new()), t(0)).unwrap();
        let cred = h.join("o1").unwrap();
        h.start(t(0)).unwrap();
        assert!(matches!(
            h.submit(t(1), &cred.token, &answer(0, "engaged")),
            Err(SubmitError::MissingSubject)
        ));
        for s in ["s3", "s1"] {
            let mut req = answer(0, "engaged");
            req.subject_id = Some(s.into());
            h.submit(t(2), &cred.token, &req).unwrap();
        }
        h.tick(t(20_000)).unwrap();
        assert_eq!(h.state().observations().len(), 2);
    }

    #[test]
    fn stall_expires_every_skipped_prompt() {
        let (mut h, _) = running(&["o1"]);
        h.tick(t(15_000)).unwrap();
        assert_eq!(h.state().prompts_issued(), 4);
        assert_eq!(h.state().observations().len(), 3);
        assert_eq!(h.current_prompt().unwrap().prompt_index, 3);
    }

    #[test]
    fn end_expires_the_open_prompt() {
        let (mut h, creds) = running(&["o1", "o2"]);
        h.submit(t(10), &creds[0].token, &answer(0, "engaged")).unwrap();
        h.end(t(2500)).unwrap();
        let obs = h.state().observations();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[1].status, ObservationStatus::Missed);
        assert_eq!(obs[1].logged_at, t(2500));
        assert!(h.journal().is_sealed());
        assert!(matches!(h.end(t(3000)), Err(HostError::Session(SessionError::SessionEnded))));
        assert!(matches!(
            h.submit(t(3000), &creds[1].token, &answer(0, "engaged")),
            Err(SubmitError::NotRunning(SessionError::SessionEnded))
        ));
        // an acknowledged key is still acknowledged
        assert!(h.submit(t(3000), &creds[0].token, &answer(0, "engaged")).unwrap().duplicate);
    }

    #[test]
    fn operations_before_start() {
        let mut h = host(&["o1"]);
        let cred = h.join("o1").unwrap();
        assert!(matches!(
            h.submit(t(0), &cred.token, &answer(0, "engaged")),
            Err(SubmitError::NotRunning(SessionError::NotRunning))
        ));
        assert!(matches!(h.end(t(0)), Err(HostError::Session(SessionError::NotRunning))));
        h.tick(t(100_000)).unwrap();
        assert_eq!(h.journal().len(), 1);
    }

    #[test]
    fn clock_going_backwards_is_clamped() {
        let (mut h, creds) = running(&["o1"]);
        h.tick(t(3000)).unwrap();
        let ack = h.submit(t(1000), &creds[0].token, &answer(0, "engaged")).unwrap().ack;
        assert_eq!(ack.logged_at, t(3000));
    }

    #[test]
    fn subscribers_see_scheduler_order() {
        let (mut h, _) = running(&["o1"]);
        let mut rx = h.subscribe();
        h.tick(t(10_000)).unwrap();
        h.end(t(11_000)).unwrap();
        let mut seen = Vec::new();
        while let Ok(e) = rx.try_recv() {
            seen.push(e);
        }
        let summary: Vec<(String, Option<u64>)> = seen
            .iter()
            .map(|e| {
                let v = serde_json::to_value(e).unwrap();
                (v["type"].as_str().unwrap().to_string(), e.prompt_index())
            })
            .collect();
        assert_eq!(
            summary,
            vec![
                ("prompt_expired".to_string(), Some(0)),
                ("prompt_opened".to_string(), Some(1)),
                ("prompt_expired".to_string(), Some(1)),
                ("prompt_opened".to_string(), Some(2)),
                ("prompt_expired".to_string(), Some(2)),
                ("session_ended".to_string(), None),
            ]
        );
    }

    #[test]
    fn replay_reports_open_prompt_and_answer_state() {
        let (mut h, creds) = running(&["o1", "o2"]);
        h.tick(t(5000)).unwrap();
        h.submit(t(5100), &creds[0].token, &answer(1, "engaged")).unwrap();
        match h.replay_for("o1").unwrap() {
            StreamEvent::PromptOpened {
                prompt,
                prompts_issued,
                replay,
                answered,
                subject_name,
            } => {
                assert_eq!(prompt.prompt_index, 1);
                assert_eq!(prompts_issued, 2);
                assert!(replay && answered);
                assert_eq!(subject_name.as_deref(), Some("Student 2"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            h.replay_for("o2"),
            Some(StreamEvent::PromptOpened { answered: false, .. })
        ));
    }

    #[test]
    fn recovered_host_continues_where_it_stopped() {
        let (mut h, creds) = running(&["o1", "o2"]);
        h.submit(t(10), &creds[0].token, &answer(0, "engaged")).unwrap();
        h.tick(t(5000)).unwrap();
        h.submit(t(5010), &creds[0].token, &answer(1, "boredom")).unwrap();
        h.submit(t(5020), &creds[1].token, &answer(1, "neutral")).unwrap();

        let bytes = h.journal().get_ref().clone();
        let (entries, _) = journal::read_entries(&bytes).unwrap();
        let mut r = SessionHost::recover(JournalWriter::resume(bytes.clone(), &entries), &entries).unwrap();
        assert_eq!(r.state(), h.state());
        assert_eq!(r.current_prompt(), h.current_prompt());
        assert_eq!(r.scheduler(), h.scheduler());
        assert_eq!(r.footprint().acknowledgements, 3);

        let c = r.join("o1").unwrap();
        assert!(r.submit(t(5030), &c.token, &answer(1, "boredom")).unwrap().duplicate);
        for host in [&mut h, &mut r] {
            host.tick(t(12_000)).unwrap();
        }
        assert_eq!(r.state(), h.state());
        assert_eq!(r.journal().get_ref(), h.journal().get_ref());
    }

    #[test]
    fn multiple_selection_groups_accept_empty_sets() {
        let mut cfg = affect_config(1, &["o1"]);
        cfg.scheme.groups.push(dlot_core::CategoryGroup {
            name: "behaviour".into(),
            labels: vec!["talking".into(), "writing".into()],
            selection: Selection::Multiple,
        });
        let mut h = SessionHost::create(cfg, JournalWriter::new(Vec::new()), t(0)).unwrap();
        let cred = h.join("o1").unwrap();
        h.start(t(0)).unwrap();
        assert!(h.submit(t(1), &cred.token, &answer(0, "engaged")).is_ok());
    }
}

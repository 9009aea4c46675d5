//! Interval-prompted observation logging.
//!
//! Researchers describe a study as a [`SessionConfig`]: a label scheme of
//! radio (single) and checklist (multiple) groups, a roster of subjects, a
//! prompt interval and the observers taking part. The [`scheduler`] turns the
//! interval into prompts, observers answer them with [`Observation`]s, every
//! event lands in the append-only [`journal`], and the recorded session can be
//! exported to CSV or XLSX and checked for inter-rater agreement.

pub mod analytics;
pub mod config;
pub mod export;
pub mod journal;
pub mod merge;
pub mod model;
pub mod scheduler;
pub mod session;
pub mod time;

#[cfg(any(test, feature = "test-support"))]
pub mod testing;

pub use config::{parse_config, validate_config, Violation};
pub use model::{
    CategoryGroup, LabelScheme, Observation, ObservationStatus, Roster, SchedulingMode, Selection,
    Selections, SessionConfig, Subject, SubmissionKey, TimerPolicy,
};
pub use scheduler::{prompt_at, PromptOutcome, PromptSpec, SchedulerEvent, SchedulerState};
pub use session::{start_session, Phase, SessionError, SessionEvent, SessionState};
pub use time::Timestamp;

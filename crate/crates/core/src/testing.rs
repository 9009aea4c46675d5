//! Fixture builders shared by unit tests, integration tests and downstream crates.

use crate::model::*;
use crate::time::Timestamp;

pub const AFFECT_LABELS: [&str; 5] = ["engaged", "boredom", "confusion", "frustration", "neutral"];

/// Round-robin config with one single-selection `affect` group, subjects
/// `s1..=sN`, a 5 s interval and the given observers.
pub fn affect_config(subjects: usize, observers: &[&str]) -> SessionConfig {
    SessionConfig {
        session_id: "fixture".into(),
        title: "fixture session".into(),
        scheme: LabelScheme {
            groups: vec![CategoryGroup {
                name: "affect".into(),
                labels: AFFECT_LABELS.iter().map(|s| s.to_string()).collect(),
                selection: Selection::Single,
            }],
        },
        roster: Roster {
            subjects: (1..=subjects)
                .map(|i| Subject {
                    id: format!("s{i}"),
                    display_name: format!("Student {i}"),
                    group_tag: None,
                })
                .collect(),
        },
        timer: TimerPolicy { interval_ms: 5_000 },
        scheduling_mode: SchedulingMode::RoundRobin,
        observer_ids: observers.iter().map(|s| s.to_string()).collect(),
        created_at: Timestamp::from_millis(0),
    }
}

/// A logged observation in the `affect` group, stamped one second per prompt.
pub fn obs(observer: &str, subject: &str, prompt: u64, affect: &[&str]) -> Observation {
    Observation {
        observer_id: observer.into(),
        subject_id: subject.into(),
        prompt_index: prompt,
        logged_at: Timestamp::from_millis(prompt as i64 * 1_000),
        selections: if affect.is_empty() {
            Selections::new()
        } else {
            selections([("affect", affect.iter().copied())])
        },
        status: ObservationStatus::Logged,
    }
}

/// Shape of a randomly generated session.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub max_subjects: usize,
    pub max_observers: usize,
    pub max_prompts: u64,
    /// Probability that an observer answers a prompt at all.
    pub answer_rate: f64,
}

impl SimParams {
    pub fn small() -> Self {
        SimParams {
            max_subjects: 4,
            max_observers: 3,
            max_prompts: 6,
            answer_rate: 0.7,
        }
    }
}

/// A generated session: its journal entries and the state they fold to.
#[derive(Debug, Clone)]
pub struct SimSession {
    pub config: SessionConfig,
    pub entries: Vec<crate::journal::JournalEntry>,
    pub state: crate::session::SessionState,
}

const AWKWARD_LABELS: [&str; 8] = [
    "on-task",
    "off task",
    "says \"hi\"",
    "comma, inside",
    "line\nbreak",
    "naïve ✓",
    "<tag> & amp",
    "  padded  ",
];

/// Builds a random but valid session by driving the scheduler on virtual time.
pub fn simulate_session<R: rand::Rng>(rng: &mut R, params: &SimParams) -> SimSession {
    use crate::journal::JournalEntry;
    use crate::scheduler::{SchedulerEvent, SchedulerState};
    use crate::session::{SessionEvent, SessionState};
    use rand::seq::{IndexedRandom, SliceRandom};

    let n_subjects = rng.random_range(1..=params.max_subjects);
    let n_observers = rng.random_range(1..=params.max_observers);
    let mut awkward: Vec<&str> = AWKWARD_LABELS.to_vec();
    awkward.shuffle(rng);
    let multi_labels: Vec<String> = awkward[..rng.random_range(1..=4)]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut groups = vec![CategoryGroup {
        name: "affect".into(),
        labels: AFFECT_LABELS[..rng.random_range(2..=5)]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        selection: Selection::Single,
    }];
    if rng.random_bool(0.6) {
        groups.push(CategoryGroup {
            name: "behaviour, observed".into(),
            labels: multi_labels,
            selection: Selection::Multiple,
        });
    }
    let mode = match rng.random_range(0..3) {
        0 if n_subjects == 1 => SchedulingMode::SingleSubject,
        1 => SchedulingMode::FreeSelect,
        _ => SchedulingMode::RoundRobin,
    };
    let config = SessionConfig {
        session_id: format!("sim-{}", rng.random_range(0..1_000_000u32)),
        title: "simulated".into(),
        scheme: LabelScheme { groups },
        roster: Roster {
            subjects: (0..n_subjects)
                .map(|i| Subject {
                    id: format!("subj-{i}"),
                    display_name: format!("Name, \"{i}\""),
                    group_tag: (i % 2 == 0).then(|| "team-a".to_string()),
                })
                .collect(),
        },
        timer: TimerPolicy {
            interval_ms: rng.random_range(500..=12_000),
        },
        scheduling_mode: mode,
        observer_ids: (0..n_observers).map(|i| format!("obs-{i}")).collect(),
        created_at: Timestamp::from_millis(1_700_000_000_000),
    };

    let start = Timestamp::from_millis(1_700_000_000_000 + rng.random_range(0..86_400_000));
    let interval = config.timer.interval_millis();
    let n_prompts = rng.random_range(0..=params.max_prompts);

    let mut events: Vec<(Timestamp, SessionEvent)> = vec![
        (config.created_at, SessionEvent::ConfigSnapshot(config.clone())),
        (start, SessionEvent::SessionStarted { started_at: start }),
    ];
    let mut scheduler = SchedulerState::new(start);

    let random_selections = |rng: &mut R| -> Selections {
        let mut sel = Selections::new();
        for g in &config.scheme.groups {
            match g.selection {
                Selection::Single => {
                    sel.insert(g.name.clone(), [g.labels.choose(rng).unwrap().clone()].into());
                }
                Selection::Multiple => {
                    let chosen = g.labels.iter().filter(|_| rng.random_bool(0.4)).cloned().collect();
                    sel.insert(g.name.clone(), chosen);
                }
            }
        }
        sel
    };

    let mut pending_misses: Vec<Observation> = Vec::new();
    for k in 0..=n_prompts {
        let due = start + k as i64 * interval;
        for ev in scheduler.advance(&config, due).unwrap() {
            match ev {
                SchedulerEvent::PromptExpired(p) => {
                    events.push((due, SessionEvent::PromptExpired(p)));
                    for missed in pending_misses.drain(..) {
                        events.push((due, SessionEvent::ObservationLogged(missed)));
                    }
                }
                // the prompt opened at the final deadline is cut off by the end
                SchedulerEvent::PromptOpened(p) if k < n_prompts => {
                    events.push((due, SessionEvent::PromptOpened(p)))
                }
                SchedulerEvent::PromptOpened(_) => {}
            }
        }
        if k == n_prompts {
            break;
        }
        let prompt = scheduler.open_prompt().unwrap().clone();
        let mut answers = Vec::new();
        for observer in &config.observer_ids {
            let targets: Vec<String> = match &prompt.subject_id {
                Some(s) => vec![s.clone()],
                None => config
                    .roster
                    .subjects
                    .iter()
                    .filter(|_| rng.random_bool(0.5))
                    .map(|s| s.id.clone())
                    .collect(),
            };
            if !rng.random_bool(params.answer_rate) {
                if let Some(subject) = &prompt.subject_id {
                    pending_misses.push(Observation {
                        observer_id: observer.clone(),
                        subject_id: subject.clone(),
                        prompt_index: k,
                        logged_at: prompt.deadline,
                        selections: Selections::new(),
                        status: ObservationStatus::Missed,
                    });
                }
                continue;
            }
            for subject in targets {
                let skipped = rng.random_bool(0.1);
                answers.push(Observation {
                    observer_id: observer.clone(),
                    subject_id: subject,
                    prompt_index: k,
                    logged_at: due + rng.random_range(0..interval),
                    selections: if skipped {
                        Selections::new()
                    } else {
                        random_selections(rng)
                    },
                    status: if skipped {
                        ObservationStatus::Skipped
                    } else {
                        ObservationStatus::Logged
                    },
                });
            }
        }
        answers.sort_by_key(|o| o.logged_at);
        for o in answers {
            events.push((o.logged_at, SessionEvent::ObservationLogged(o)));
        }
    }
    let end = start + n_prompts as i64 * interval;
    events.push((end, SessionEvent::SessionEnded { ended_at: end }));

    let entries: Vec<JournalEntry> = events
        .into_iter()
        .enumerate()
        .map(|(i, (ts, e))| JournalEntry::new(i as u64, ts, e))
        .collect();
    let state = SessionState::from_events(entries.iter().map(|e| &e.event)).unwrap();
    SimSession {
        config,
        entries,
        state,
    }
}

/// Brute-force evaluations of the agreement formulas by pair enumeration.
/// They share no code with [`crate::analytics`] and serve as its oracle.
pub mod oracle {
    /// `(p_o, p_e, kappa)` for two raters, or `None` when `p_e == 1`.
    /// `p_e` is the probability that rater 1's label on a random item equals
    /// rater 2's label on an independently drawn random item.
    pub fn cohen(a: &[String], b: &[String]) -> Option<(f64, f64, f64)> {
        let n = a.len();
        let agree = (0..n).filter(|&i| a[i] == b[i]).count();
        let mut chance_hits = 0usize;
        for x in a {
            for y in b {
                if x == y {
                    chance_hits += 1;
                }
            }
        }
        if chance_hits == n * n {
            return None;
        }
        let p_o = agree as f64 / n as f64;
        let p_e = chance_hits as f64 / (n * n) as f64;
        Some((p_o, p_e, (p_o - p_e) / (1.0 - p_e)))
    }

    /// `(P̄, P̄_e, kappa)` for `rows[item][rater]`, or `None` when `P̄_e == 1`.
    /// P_i is the share of ordered pairs of distinct raters that agree on
    /// item i; P̄_e is the chance two ratings drawn with replacement from the
    /// pooled ratings agree.
    pub fn fleiss(rows: &[Vec<String>]) -> Option<(f64, f64, f64)> {
        let n_items = rows.len();
        let n = rows[0].len();
        let mut p_sum = 0.0;
        for row in rows {
            let mut pairs = 0usize;
            for r in 0..n {
                for s in 0..n {
                    if r != s && row[r] == row[s] {
                        pairs += 1;
                    }
                }
            }
            p_sum += pairs as f64 / (n * (n - 1)) as f64;
        }
        let pooled: Vec<&String> = rows.iter().flatten().collect();
        let total = pooled.len();
        let mut hits = 0usize;
        for x in &pooled {
            for y in &pooled {
                if x == y {
                    hits += 1;
                }
            }
        }
        if hits == total * total {
            return None;
        }
        let p_bar = p_sum / n_items as f64;
        let p_e = hits as f64 / (total * total) as f64;
        Some((p_bar, p_e, (p_bar - p_e) / (1.0 - p_e)))
    }

    /// Random `rows[item][rater]` table: 1..=max_items items, 2..=max_raters
    /// raters and labels drawn from 1..=max_categories categories.
    pub fn random_table<R: rand::Rng>(
        rng: &mut R,
        max_items: usize,
        max_raters: usize,
        max_categories: usize,
    ) -> Vec<Vec<String>> {
        let items = rng.random_range(1..=max_items);
        let raters = rng.random_range(2..=max_raters);
        let categories = rng.random_range(1..=max_categories);
        (0..items)
            .map(|_| {
                (0..raters)
                    .map(|_| format!("c{}", rng.random_range(0..categories)))
                    .collect()
            })
            .collect()
    }
}

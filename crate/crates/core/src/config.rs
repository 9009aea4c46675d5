//! Session configuration validation.
//!
//! A config arrives as an arbitrary JSON document. [`validate_config`] walks
//! it once, collecting every problem it can find (shape errors and invariant
//! violations alike) so a caller can report them all in one go. Each
//! [`Violation`] carries a JSONPath-like location such as
//! `scheme.groups[0].labels[1]`.
//!
//! Keys beginning with `_` are ignored anywhere in the document, which lets
//! example configs carry `_comment` fields.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::{
    CategoryGroup, LabelScheme, Roster, SchedulingMode, Selection, SessionConfig, Subject,
    TimerPolicy, MIN_INTERVAL_MS, MULTI_LABEL_SEPARATOR,
};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Accumulates violations, keeping only the first one reported per path.
#[derive(Default)]
struct Report {
    violations: Vec<Violation>,
    seen: HashSet<String>,
}

impl Report {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        let path = path.into();
        if self.seen.insert(path.clone()) {
            self.violations.push(Violation::new(path, message));
        }
    }

    fn finish<T>(self, value: T) -> Result<T, Vec<Violation>> {
        if self.violations.is_empty() {
            Ok(value)
        } else {
            Err(self.violations)
        }
    }
}

/// Parses and validates a config document given as JSON text.
pub fn parse_config(text: &str) -> Result<SessionConfig, Vec<Violation>> {
    match serde_json::from_str::<Value>(text) {
        Ok(value) => validate_config(&value),
        Err(e) => Err(vec![Violation::new("$", format!("malformed JSON: {e}"))]),
    }
}

/// Validates a candidate config, returning either a config satisfying every
/// invariant or the complete list of violations.
pub fn validate_config(raw: &Value) -> Result<SessionConfig, Vec<Violation>> {
    let mut report = Report::default();
    let Some(obj) = raw.as_object() else {
        report.push("$", "config must be a JSON object");
        return Err(report.violations);
    };
    reject_unknown(
        obj,
        "",
        &[
            "session_id",
            "title",
            "scheme",
            "roster",
            "timer",
            "scheduling_mode",
            "observer_ids",
            "created_at",
        ],
        &mut report,
    );

    let session_id = required(obj, "session_id", "session_id", &mut report)
        .and_then(|v| string(v, "session_id", &mut report))
        .unwrap_or_default();
    let title = match obj.get("title") {
        Some(v) => string(v, "title", &mut report).unwrap_or_default(),
        None => String::new(),
    };
    let scheme = required(obj, "scheme", "scheme", &mut report)
        .map(|v| shape_scheme(v, &mut report))
        .unwrap_or(LabelScheme { groups: Vec::new() });
    let roster = required(obj, "roster", "roster", &mut report)
        .map(|v| shape_roster(v, &mut report))
        .unwrap_or(Roster {
            subjects: Vec::new(),
        });
    let timer = match obj.get("timer") {
        Some(v) => shape_timer(v, &mut report),
        None => TimerPolicy::default(),
    };
    let scheduling_mode = required(obj, "scheduling_mode", "scheduling_mode", &mut report)
        .and_then(|v| {
            let parsed = serde_json::from_value::<SchedulingMode>(v.clone()).ok();
            if parsed.is_none() {
                report.push(
                    "scheduling_mode",
                    "must be one of \"single_subject\", \"round_robin\", \"free_select\"",
                );
            }
            parsed
        });
    let observer_ids = required(obj, "observer_ids", "observer_ids", &mut report)
        .map(|v| string_list(v, "observer_ids", &mut report))
        .unwrap_or_default();
    let created_at = required(obj, "created_at", "created_at", &mut report).and_then(|v| {
        let parsed = v.as_str().and_then(|s| s.parse::<Timestamp>().ok());
        if parsed.is_none() {
            report.push(
                "created_at",
                "must be an RFC 3339 timestamp such as 2024-03-01T09:00:00.000Z",
            );
        }
        parsed
    });

    let config = SessionConfig {
        session_id,
        title,
        scheme,
        roster,
        timer,
        // placeholders only matter when a violation is already recorded
        scheduling_mode: scheduling_mode.unwrap_or(SchedulingMode::RoundRobin),
        observer_ids,
        created_at: created_at.unwrap_or_default(),
    };
    check_config(&config, scheduling_mode.is_some(), &mut report);
    report.finish(config)
}

impl SessionConfig {
    /// Checks every config invariant on an already-typed value.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut report = Report::default();
        check_config(self, true, &mut report);
        report.finish(())
    }
}

/// Text that cannot be represented in an XLSX cell.
fn has_forbidden_control(s: &str) -> bool {
    s.chars()
        .any(|c| (c.is_control() && !matches!(c, '\t' | '\n' | '\r')) || matches!(c, '\u{FFFE}' | '\u{FFFF}'))
}

fn check_text(path: String, s: &str, report: &mut Report) {
    if has_forbidden_control(s) {
        report.push(path, "must not contain control characters");
    }
}

fn check_config(config: &SessionConfig, mode_known: bool, report: &mut Report) {
    check_session_id(&config.session_id, report);
    check_text("title".into(), &config.title, report);
    for (gi, group) in config.scheme.groups.iter().enumerate() {
        check_text(format!("scheme.groups[{gi}].name"), &group.name, report);
        for (li, label) in group.labels.iter().enumerate() {
            check_text(format!("scheme.groups[{gi}].labels[{li}]"), label, report);
        }
    }
    for (i, subject) in config.roster.subjects.iter().enumerate() {
        check_text(format!("roster.subjects[{i}].id"), &subject.id, report);
        check_text(format!("roster.subjects[{i}].display_name"), &subject.display_name, report);
        if let Some(tag) = &subject.group_tag {
            check_text(format!("roster.subjects[{i}].group_tag"), tag, report);
        }
    }
    for (i, id) in config.observer_ids.iter().enumerate() {
        check_text(format!("observer_ids[{i}]"), id, report);
    }
    check_scheme(&config.scheme, report);
    check_roster(&config.roster, report);
    if config.timer.interval_ms < MIN_INTERVAL_MS {
        report.push(
            "timer.interval_ms",
            format!("interval must be at least {MIN_INTERVAL_MS} ms"),
        );
    }
    check_observers(&config.observer_ids, report);
    if mode_known
        && config.scheduling_mode == SchedulingMode::SingleSubject
        && config.roster.len() != 1
    {
        report.push(
            "scheduling_mode",
            format!(
                "single_subject mode requires exactly one subject, roster has {}",
                config.roster.len()
            ),
        );
    }
}

fn check_session_id(id: &str, report: &mut Report) {
    if id.is_empty() {
        report.push("session_id", "must not be empty");
    } else if id.starts_with('.')
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    {
        report.push(
            "session_id",
            "may contain only ASCII letters, digits, '-', '_' and '.', and must not start with '.'",
        );
    }
}

fn check_scheme(scheme: &LabelScheme, report: &mut Report) {
    if scheme.groups.is_empty() {
        report.push("scheme.groups", "scheme must contain at least one group");
    }
    let mut names = HashSet::new();
    for (gi, group) in scheme.groups.iter().enumerate() {
        let gpath = format!("scheme.groups[{gi}]");
        if group.name.is_empty() {
            report.push(format!("{gpath}.name"), "must not be empty");
        } else if !names.insert(group.name.as_str()) {
            report.push(
                format!("{gpath}.name"),
                format!("duplicate group name {:?}", group.name),
            );
        }
        if group.labels.is_empty() {
            report.push(format!("{gpath}.labels"), "group must contain at least one label");
        }
        let mut labels = HashSet::new();
        for (li, label) in group.labels.iter().enumerate() {
            let lpath = format!("{gpath}.labels[{li}]");
            if label.is_empty() {
                report.push(lpath, "must not be empty");
            } else if label.contains(MULTI_LABEL_SEPARATOR) {
                report.push(
                    lpath,
                    format!("label {label:?} must not contain '{MULTI_LABEL_SEPARATOR}'"),
                );
            } else if !labels.insert(label.as_str()) {
                report.push(lpath, format!("duplicate label {label:?}"));
            }
        }
    }
}

fn check_roster(roster: &Roster, report: &mut Report) {
    if roster.subjects.is_empty() {
        report.push(
            "roster.subjects",
            "roster must contain at least one subject",
        );
    }
    let mut ids = HashSet::new();
    for (i, subject) in roster.subjects.iter().enumerate() {
        let path = format!("roster.subjects[{i}].id");
        if subject.id.is_empty() {
            report.push(path, "must not be empty");
        } else if !ids.insert(subject.id.as_str()) {
            report.push(path, format!("duplicate subject id {:?}", subject.id));
        }
    }
}

fn check_observers(observers: &[String], report: &mut Report) {
    if observers.is_empty() {
        report.push("observer_ids", "at least one observer is required");
    }
    let mut seen = HashSet::new();
    for (i, id) in observers.iter().enumerate() {
        let path = format!("observer_ids[{i}]");
        if id.is_empty() {
            report.push(path, "must not be empty");
        } else if !seen.insert(id.as_str()) {
            report.push(path, format!("duplicate observer id {id:?}"));
        }
    }
}

fn shape_scheme(value: &Value, report: &mut Report) -> LabelScheme {
    let Some(obj) = object(value, "scheme", report) else {
        return LabelScheme { groups: Vec::new() };
    };
    reject_unknown(obj, "scheme", &["groups"], report);
    let groups = required(obj, "groups", "scheme.groups", report)
        .and_then(|v| array(v, "scheme.groups", report))
        .map(|items| {
            items
                .iter()
                .enumerate()
                .map(|(i, g)| shape_group(g, &format!("scheme.groups[{i}]"), report))
                .collect()
        })
        .unwrap_or_default();
    LabelScheme { groups }
}

fn shape_group(value: &Value, path: &str, report: &mut Report) -> CategoryGroup {
    let mut group = CategoryGroup {
        name: String::new(),
        labels: Vec::new(),
        selection: Selection::Single,
    };
    let Some(obj) = object(value, path, report) else {
        return group;
    };
    reject_unknown(obj, path, &["name", "labels", "selection"], report);
    let name_path = format!("{path}.name");
    if let Some(name) = required(obj, "name", &name_path, report) {
        group.name = string(name, &name_path, report).unwrap_or_default();
    }
    let labels_path = format!("{path}.labels");
    if let Some(labels) = required(obj, "labels", &labels_path, report) {
        group.labels = string_list(labels, &labels_path, report);
    }
    let sel_path = format!("{path}.selection");
    if let Some(sel) = required(obj, "selection", &sel_path, report) {
        match serde_json::from_value::<Selection>(sel.clone()) {
            Ok(s) => group.selection = s,
            Err(_) => report.push(sel_path, "must be \"single\" or \"multiple\""),
        }
    }
    group
}

fn shape_roster(value: &Value, report: &mut Report) -> Roster {
    let Some(obj) = object(value, "roster", report) else {
        return Roster {
            subjects: Vec::new(),
        };
    };
    reject_unknown(obj, "roster", &["subjects"], report);
    let subjects = required(obj, "subjects", "roster.subjects", report)
        .and_then(|v| array(v, "roster.subjects", report))
        .map(|items| {
            items
                .iter()
                .enumerate()
                .map(|(i, s)| shape_subject(s, &format!("roster.subjects[{i}]"), report))
                .collect()
        })
        .unwrap_or_default();
    Roster { subjects }
}

fn shape_subject(value: &Value, path: &str, report: &mut Report) -> Subject {
    let mut subject = Subject {
        id: String::new(),
        display_name: String::new(),
        group_tag: None,
    };
    let Some(obj) = object(value, path, report) else {
        return subject;
    };
    reject_unknown(obj, path, &["id", "display_name", "group_tag"], report);
    let id_path = format!("{path}.id");
    if let Some(id) = required(obj, "id", &id_path, report) {
        subject.id = string(id, &id_path, report).unwrap_or_default();
    }
    subject.display_name = match obj.get("display_name") {
        Some(v) => string(v, &format!("{path}.display_name"), report).unwrap_or_default(),
        None => subject.id.clone(),
    };
    subject.group_tag = match obj.get("group_tag") {
        None | Some(Value::Null) => None,
        Some(v) => string(v, &format!("{path}.group_tag"), report),
    };
    subject
}

fn shape_timer(value: &Value, report: &mut Report) -> TimerPolicy {
    let Some(obj) = object(value, "timer", report) else {
        return TimerPolicy::default();
    };
    reject_unknown(obj, "timer", &["interval_ms"], report);
    match obj.get("interval_ms") {
        None => TimerPolicy::default(),
        Some(v) => match v.as_u64() {
            Some(interval_ms) => TimerPolicy { interval_ms },
            None => {
                report.push("timer.interval_ms", "must be a positive integer number of milliseconds");
                TimerPolicy::default()
            }
        },
    }
}

fn reject_unknown(obj: &Map<String, Value>, path: &str, known: &[&str], report: &mut Report) {
    for key in obj.keys() {
        if !key.starts_with('_') && !known.contains(&key.as_str()) {
            let full = if path.is_empty() {
                key.clone()
            } else {
                format!("{path}.{key}")
            };
            report.push(full, "unknown field");
        }
    }
}

fn required<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    path: &str,
    report: &mut Report,
) -> Option<&'a Value> {
    let v = obj.get(key);
    if v.is_none() {
        report.push(path, "is required");
    }
    v
}

fn object<'a>(value: &'a Value, path: &str, report: &mut Report) -> Option<&'a Map<String, Value>> {
    let obj = value.as_object();
    if obj.is_none() {
        report.push(path, "must be an object");
    }
    obj
}

fn array<'a>(value: &'a Value, path: &str, report: &mut Report) -> Option<&'a Vec<Value>> {
    let arr = value.as_array();
    if arr.is_none() {
        report.push(path, "must be an array");
    }
    arr
}

fn string(value: &Value, path: &str, report: &mut Report) -> Option<String> {
    let s = value.as_str().map(str::to_string);
    if s.is_none() {
        report.push(path, "must be a string");
    }
    s
}

fn string_list(value: &Value, path: &str, report: &mut Report) -> Vec<String> {
    let Some(items) = array(value, path, report) else {
        return Vec::new();
    };
    items
        .iter()
        .enumerate()
        .map(|(i, v)| string(v, &format!("{path}[{i}]"), report).unwrap_or_default())
        .collect()
}

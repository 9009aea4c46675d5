//! Append-only session journal.
//!
//! One record per line, LF-terminated:
//!
//! ```text
//! <crc32-ieee as 8 lowercase hex digits> <json object>\n
//! ```
//!
//! The checksum covers exactly the JSON bytes. The JSON object carries
//! `seq`, `kind`, `ts` and `payload`, in that order. Entry `n` has `seq == n`,
//! entry 0 is always a `config_snapshot` whose payload also records the
//! `format_version`, and nothing may follow `session_ended`.
//!
//! A record only counts once its LF is on disk, so a crash mid-write leaves a
//! torn final line which [`replay`] drops. A complete line that fails its
//! checksum is corruption and stops replay at that line.

use std::fs::{File, OpenOptions};
use std::io::{self, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::model::{Observation, SessionConfig};
use crate::scheduler::PromptSpec;
use crate::session::{SessionError, SessionEvent, SessionState};
use crate::time::Timestamp;

pub const FORMAT_VERSION: u32 = 1;

/// File extension of journal files, `<session_id>.dlotj`.
pub const EXTENSION: &str = "dlotj";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    ConfigSnapshot,
    SessionStarted,
    PromptOpened,
    PromptExpired,
    ObservationLogged,
    SessionEnded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub seq: u64,
    pub ts: Timestamp,
    pub event: SessionEvent,
}

impl JournalEntry {
    pub fn new(seq: u64, ts: Timestamp, event: SessionEvent) -> Self {
        JournalEntry { seq, ts, event }
    }

    pub fn kind(&self) -> EntryKind {
        match self.event {
            SessionEvent::ConfigSnapshot(_) => EntryKind::ConfigSnapshot,
            SessionEvent::SessionStarted { .. } => EntryKind::SessionStarted,
            SessionEvent::PromptOpened(_) => EntryKind::PromptOpened,
            SessionEvent::PromptExpired(_) => EntryKind::PromptExpired,
            SessionEvent::ObservationLogged(_) => EntryKind::ObservationLogged,
            SessionEvent::SessionEnded { .. } => EntryKind::SessionEnded,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("sequence gap: expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("journal is sealed by session_ended")]
    Sealed,
    #[error("first journal entry must be a config_snapshot")]
    MissingSnapshot,
    #[error("journal is read-only after an earlier write failure")]
    ReadOnly,
    #[error("journal is locked by another writer")]
    Locked,
    #[error("journal {0} already exists")]
    AlreadyExists(PathBuf),
    #[error("journal contains no complete entries")]
    Empty,
    #[error("corrupt journal at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("encoding journal entry: {0}")]
    Encode(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Serialize)]
struct RecordOut<'a, P: Serialize> {
    seq: u64,
    kind: EntryKind,
    ts: Timestamp,
    payload: &'a P,
}

#[derive(Deserialize)]
struct RecordIn<'a> {
    seq: u64,
    kind: EntryKind,
    ts: Timestamp,
    #[serde(borrow)]
    payload: &'a RawValue,
}

#[derive(Serialize, Deserialize)]
struct SnapshotPayload<C> {
    format_version: u32,
    config: C,
}

#[derive(Serialize, Deserialize)]
struct StartedPayload {
    started_at: Timestamp,
}

#[derive(Serialize, Deserialize)]
struct EndedPayload {
    ended_at: Timestamp,
}

fn record_json<P: Serialize>(entry: &JournalEntry, payload: &P) -> serde_json::Result<Vec<u8>> {
    serde_json::to_vec(&RecordOut {
        seq: entry.seq,
        kind: entry.kind(),
        ts: entry.ts,
        payload,
    })
}

/// Serializes one entry as a complete journal line, LF included.
pub fn encode_record(entry: &JournalEntry) -> serde_json::Result<Vec<u8>> {
    let json = match &entry.event {
        SessionEvent::ConfigSnapshot(config) => record_json(
            entry,
            &SnapshotPayload {
                format_version: FORMAT_VERSION,
                config,
            },
        )?,
        SessionEvent::SessionStarted { started_at } => record_json(
            entry,
            &StartedPayload {
                started_at: *started_at,
            },
        )?,
        SessionEvent::PromptOpened(p) | SessionEvent::PromptExpired(p) => record_json(entry, p)?,
        SessionEvent::ObservationLogged(o) => record_json(entry, o)?,
        SessionEvent::SessionEnded { ended_at } => record_json(
            entry,
            &EndedPayload {
                ended_at: *ended_at,
            },
        )?,
    };
    let mut line = Vec::with_capacity(json.len() + 10);
    line.extend_from_slice(format!("{:08x} ", crc32fast::hash(&json)).as_bytes());
    line.extend_from_slice(&json);
    line.push(b'\n');
    Ok(line)
}

/// Decodes one line (without its LF).
pub fn decode_line(line: &[u8]) -> Result<JournalEntry, String> {
    if line.len() < 10 || line[8] != b' ' {
        return Err("malformed record framing".into());
    }
    let (crc_hex, json) = (&line[..8], &line[9..]);
    let expected = std::str::from_utf8(crc_hex)
        .ok()
        .filter(|s| s.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()))
        .and_then(|s| u32::from_str_radix(s, 16).ok())
        .ok_or("malformed checksum")?;
    let actual = crc32fast::hash(json);
    if actual != expected {
        return Err(format!(
            "checksum mismatch (stored {expected:08x}, computed {actual:08x})"
        ));
    }
    let record: RecordIn = serde_json::from_slice(json).map_err(|e| format!("bad record: {e}"))?;
    let payload = record.payload.get();
    let bad = |e: serde_json::Error| format!("bad {:?} payload: {e}", record.kind);
    let event = match record.kind {
        EntryKind::ConfigSnapshot => {
            let snap: SnapshotPayload<SessionConfig> = serde_json::from_str(payload).map_err(bad)?;
            if snap.format_version != FORMAT_VERSION {
                return Err(format!(
                    "unsupported format_version {} (this build reads {FORMAT_VERSION})",
                    snap.format_version
                ));
            }
            SessionEvent::ConfigSnapshot(snap.config)
        }
        EntryKind::SessionStarted => {
            let p: StartedPayload = serde_json::from_str(payload).map_err(bad)?;
            SessionEvent::SessionStarted {
                started_at: p.started_at,
            }
        }
        EntryKind::PromptOpened => {
            SessionEvent::PromptOpened(serde_json::from_str::<PromptSpec>(payload).map_err(bad)?)
        }
        EntryKind::PromptExpired => {
            SessionEvent::PromptExpired(serde_json::from_str::<PromptSpec>(payload).map_err(bad)?)
        }
        EntryKind::ObservationLogged => SessionEvent::ObservationLogged(
            serde_json::from_str::<Observation>(payload).map_err(bad)?,
        ),
        EntryKind::SessionEnded => {
            let p: EndedPayload = serde_json::from_str(payload).map_err(bad)?;
            SessionEvent::SessionEnded {
                ended_at: p.ended_at,
            }
        }
    };
    Ok(JournalEntry {
        seq: record.seq,
        ts: record.ts,
        event,
    })
}

/// Outcome of reading a journal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    /// Complete, valid entries read before any problem.
    pub entries_read: usize,
    /// A partial final record (no LF) was found and ignored.
    pub truncated_tail: bool,
    /// 1-based line number of the first complete but invalid record.
    pub first_bad_line: Option<usize>,
    /// What was wrong with `first_bad_line`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    /// Byte length of the valid prefix (where an appender would resume).
    pub valid_bytes: u64,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        !self.truncated_tail && self.first_bad_line.is_none()
    }
}

/// Reads entries and folds them, stopping at the first invalid line.
fn scan(bytes: &[u8]) -> (Vec<JournalEntry>, Option<SessionState>, ReplayReport) {
    let mut report = ReplayReport::default();
    let mut entries = Vec::new();
    let mut state: Option<SessionState> = None;
    let mut offset = 0usize;
    let mut line_no = 0usize;

    while offset < bytes.len() {
        let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            report.truncated_tail = true;
            break;
        };
        line_no += 1;
        let line = &bytes[offset..offset + len];
        let result = decode_line(line).and_then(|entry| {
            check_entry(&entry, entries.len() as u64, &mut state).map(|()| entry)
        });
        match result {
            Ok(entry) => {
                entries.push(entry);
                offset += len + 1;
                report.valid_bytes = offset as u64;
            }
            Err(reason) => {
                report.first_bad_line = Some(line_no);
                report.problem = Some(reason);
                break;
            }
        }
    }
    report.entries_read = entries.len();
    (entries, state, report)
}

fn check_entry(
    entry: &JournalEntry,
    expected_seq: u64,
    state: &mut Option<SessionState>,
) -> Result<(), String> {
    if entry.seq != expected_seq {
        return Err(format!("expected seq {expected_seq}, found {}", entry.seq));
    }
    match (state.as_mut(), &entry.event) {
        (None, SessionEvent::ConfigSnapshot(config)) => {
            *state = Some(SessionState::created(config.clone()).map_err(|e| e.to_string())?);
            Ok(())
        }
        (None, _) => Err("first entry must be a config_snapshot".into()),
        (Some(s), event) => s.apply(event).map_err(|e: SessionError| e.to_string()),
    }
}

/// Checks a journal without modifying it. Never fails; every problem is a
/// report field.
pub fn verify(bytes: &[u8]) -> ReplayReport {
    scan(bytes).2
}

/// Reads all recoverable entries. Corruption before the tail is an error.
pub fn read_entries(bytes: &[u8]) -> Result<(Vec<JournalEntry>, ReplayReport), JournalError> {
    let (entries, _, report) = scan(bytes);
    if let (Some(line), Some(reason)) = (report.first_bad_line, &report.problem) {
        return Err(JournalError::Corrupt {
            line,
            reason: reason.clone(),
        });
    }
    Ok((entries, report))
}

/// Reconstructs the session state recorded in a journal.
pub fn replay(bytes: &[u8]) -> Result<(SessionState, ReplayReport), JournalError> {
    let (_, state, report) = scan(bytes);
    if let (Some(line), Some(reason)) = (report.first_bad_line, &report.problem) {
        return Err(JournalError::Corrupt {
            line,
            reason: reason.clone(),
        });
    }
    state.map(|s| (s, report)).ok_or(JournalError::Empty)
}

/// Serializes a complete entry sequence.
pub fn encode_all<'a, I>(entries: I) -> serde_json::Result<Vec<u8>>
where
    I: IntoIterator<Item = &'a JournalEntry>,
{
    let mut out = Vec::new();
    for entry in entries {
        out.extend(encode_record(entry)?);
    }
    Ok(out)
}

/// A byte sink that can force written data to stable storage.
pub trait DurableSink: Write {
    fn sync(&mut self) -> io::Result<()>;
}

impl DurableSink for File {
    fn sync(&mut self) -> io::Result<()> {
        self.sync_data()
    }
}

impl DurableSink for Vec<u8> {
    fn sync(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl<S: DurableSink + ?Sized> DurableSink for Box<S> {
    fn sync(&mut self) -> io::Result<()> {
        (**self).sync()
    }
}

/// Single writer over a journal sink. Each append is synced before it is
/// acknowledged.
#[derive(Debug)]
pub struct JournalWriter<S: DurableSink> {
    sink: S,
    len: u64,
    sealed: bool,
    failed: bool,
}

impl<S: DurableSink> JournalWriter<S> {
    /// Writer for an empty journal.
    pub fn new(sink: S) -> Self {
        JournalWriter {
            sink,
            len: 0,
            sealed: false,
            failed: false,
        }
    }

    /// Writer continuing a journal that already holds `entries`.
    pub fn resume(sink: S, entries: &[JournalEntry]) -> Self {
        JournalWriter {
            sink,
            len: entries.len() as u64,
            sealed: entries
                .last()
                .is_some_and(|e| matches!(e.event, SessionEvent::SessionEnded { .. })),
            failed: false,
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn has_failed(&self) -> bool {
        self.failed
    }

    pub fn get_ref(&self) -> &S {
        &self.sink
    }

    pub fn into_inner(self) -> S {
        self.sink
    }

    /// Appends `entry` and returns its seq once it is durable.
    pub fn append(&mut self, entry: &JournalEntry) -> Result<u64, JournalError> {
        if self.failed {
            return Err(JournalError::ReadOnly);
        }
        if self.sealed {
            return Err(JournalError::Sealed);
        }
        if entry.seq != self.len {
            return Err(JournalError::SequenceGap {
                expected: self.len,
                got: entry.seq,
            });
        }
        let is_snapshot = matches!(entry.event, SessionEvent::ConfigSnapshot(_));
        if is_snapshot != (self.len == 0) {
            return Err(JournalError::MissingSnapshot);
        }
        let record = encode_record(entry)?;
        if let Err(e) = self.sink.write_all(&record).and_then(|()| self.sink.sync()) {
            self.failed = true;
            return Err(e.into());
        }
        self.len += 1;
        if matches!(entry.event, SessionEvent::SessionEnded { .. }) {
            self.sealed = true;
        }
        Ok(entry.seq)
    }

    /// Appends `event` with the next seq.
    pub fn append_event(&mut self, ts: Timestamp, event: SessionEvent) -> Result<u64, JournalError> {
        self.append(&JournalEntry::new(self.len, ts, event))
    }
}

pub fn journal_path(dir: &Path, session_id: &str) -> PathBuf {
    dir.join(format!("{session_id}.{EXTENSION}"))
}

fn lock(file: &File) -> Result<(), JournalError> {
    file.try_lock().map_err(|e| match e {
        std::fs::TryLockError::WouldBlock => JournalError::Locked,
        std::fs::TryLockError::Error(e) => JournalError::Io(e),
    })
}

/// Creates a new, exclusively locked journal file. Fails if it exists.
pub fn create_file(path: &Path) -> Result<JournalWriter<File>, JournalError> {
    let file = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| match e.kind() {
            io::ErrorKind::AlreadyExists => JournalError::AlreadyExists(path.to_path_buf()),
            _ => JournalError::Io(e),
        })?;
    lock(&file)?;
    if let Some(dir) = path.parent() {
        // make the new directory entry itself durable
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(JournalWriter::new(file))
}

/// Opens an existing journal for appending after a restart: recovers its
/// entries, cuts off a torn tail and positions the writer at the end.
pub fn open_file(
    path: &Path,
) -> Result<(JournalWriter<File>, Vec<JournalEntry>, ReplayReport), JournalError> {
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    lock(&file)?;
    let bytes = std::fs::read(path)?;
    let (entries, report) = read_entries(&bytes)?;
    if report.truncated_tail {
        file.set_len(report.valid_bytes)?;
        file.sync_all()?;
    }
    file.seek(SeekFrom::Start(report.valid_bytes))?;
    Ok((JournalWriter::resume(file, &entries), entries, report))
}

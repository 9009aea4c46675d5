//! All sessions hosted by one server, each behind its own lock.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock};
use std::time::Duration;

use dlot_core::journal::{self, JournalError, EXTENSION};
use dlot_core::{validate_config, Phase, Violation};
use serde_json::Value;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::clock::Clock;
use crate::host::{HostError, SessionHost};

pub type FileHost = SessionHost<File>;
pub type Slot = Arc<Mutex<FileHost>>;

pub fn lock(slot: &Slot) -> MutexGuard<'_, FileHost> {
    slot.lock().unwrap_or_else(PoisonError::into_inner)
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("session {0} already exists")]
    Exists(String),
    #[error("no session named {0}")]
    NotFound(String),
    #[error("invalid session config ({} problems)", .0.len())]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Host(#[from] HostError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("data directory {path}: {source}")]
    DataDir {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// What happened to one journal found at startup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovered {
    pub path: PathBuf,
    pub session_id: Option<String>,
    pub entries: usize,
    pub truncated_tail: bool,
    /// Set when the journal could not be hosted.
    pub error: Option<String>,
}

pub struct Registry {
    data_dir: PathBuf,
    clock: Arc<dyn Clock>,
    sessions: RwLock<BTreeMap<String, Slot>>,
    closing: watch::Sender<bool>,
}

impl Registry {
    /// Opens `data_dir`, creating it if needed, and resumes every journal in
    /// it. Journals that cannot be recovered are reported and left alone.
    pub fn open(data_dir: &Path, clock: Arc<dyn Clock>) -> Result<(Self, Vec<Recovered>), RegistryError> {
        let dir_err = |source| RegistryError::DataDir {
            path: data_dir.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(data_dir).map_err(dir_err)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(data_dir)
            .map_err(dir_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == EXTENSION))
            .collect();
        paths.sort();

        let mut sessions = BTreeMap::new();
        let mut notes = Vec::new();
        for path in paths {
            let mut note = Recovered {
                path: path.clone(),
                session_id: None,
                entries: 0,
                truncated_tail: false,
                error: None,
            };
            match Self::resume(&path) {
                Ok((host, entries, truncated)) => {
                    let id = host.config().session_id.clone();
                    note.session_id = Some(id.clone());
                    note.entries = entries;
                    note.truncated_tail = truncated;
                    if sessions.contains_key(&id) {
                        note.error = Some(format!("duplicate session id {id}"));
                    } else {
                        sessions.insert(id, Arc::new(Mutex::new(host)));
                    }
                }
                Err(e) => note.error = Some(e.to_string()),
            }
            notes.push(note);
        }
        let (closing, _) = watch::channel(false);
        let registry = Registry {
            data_dir: data_dir.to_path_buf(),
            clock,
            sessions: RwLock::new(sessions),
            closing,
        };
        Ok((registry, notes))
    }

    fn resume(path: &Path) -> Result<(FileHost, usize, bool), RegistryError> {
        let (writer, entries, report) = journal::open_file(path)?;
        let host = SessionHost::recover(writer, &entries)?;
        Ok((host, entries.len(), report.truncated_tail))
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Creates a session from a config document. A missing `created_at` is
    /// filled in from the server clock.
    pub fn create(&self, document: &str) -> Result<String, RegistryError> {
        let now = self.clock.now();
        let mut value: Value = serde_json::from_str(document).map_err(|e| {
            RegistryError::Invalid(vec![Violation::new("$", format!("malformed JSON: {e}"))])
        })?;
        if let Some(obj) = value.as_object_mut() {
            obj.entry("created_at").or_insert_with(|| Value::String(now.to_string()));
        }
        let config = validate_config(&value).map_err(RegistryError::Invalid)?;
        let id = config.session_id.clone();

        let mut sessions = self.sessions.write().unwrap_or_else(PoisonError::into_inner);
        if sessions.contains_key(&id) {
            return Err(RegistryError::Exists(id));
        }
        let writer = match journal::create_file(&journal::journal_path(&self.data_dir, &id)) {
            Err(JournalError::AlreadyExists(_)) => return Err(RegistryError::Exists(id)),
            other => other?,
        };
        let host = SessionHost::create(config, writer, now)?;
        sessions.insert(id.clone(), Arc::new(Mutex::new(host)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<Slot, RegistryError> {
        self.sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(id)
            .cloned()
            .ok_or_else(|| RegistryError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .keys()
            .cloned()
            .collect()
    }

    fn slots(&self) -> Vec<Slot> {
        self.sessions
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .values()
            .cloned()
            .collect()
    }

    /// Advances every running session to the current time.
    pub fn tick_all(&self) {
        for slot in self.slots() {
            let mut host = lock(&slot);
            if host.state().phase() != Phase::Running {
                continue;
            }
            let now = self.clock.now();
            if let Err(e) = host.tick(now) {
                tracing::error!(session = %host.config().session_id, "tick failed: {e}");
            }
        }
    }

    /// Resolves once [`Registry::close`] has been called.
    pub fn closing(&self) -> watch::Receiver<bool> {
        self.closing.subscribe()
    }

    /// Asks long-lived connections to wind down.
    pub fn close(&self) {
        self.closing.send_replace(true);
    }
}

/// Drives every session's scheduler from the registry clock.
pub fn spawn_ticker(registry: Arc<Registry>, every: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut closing = registry.closing();
        let mut interval = tokio::time::interval(every);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                _ = interval.tick() => {}
                _ = closing.wait_for(|c| *c) => return,
            }
            let r = registry.clone();
            if tokio::task::spawn_blocking(move || r.tick_all()).await.is_err() {
                tracing::error!("scheduler tick panicked");
            }
        }
    })
}

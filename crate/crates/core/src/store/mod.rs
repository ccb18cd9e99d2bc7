//! Append-only study journal and the claim point for parallel workers.
//!
//! A study directory holds `journal.jsonl`, one JSON record per line, and
//! `journal.lock`, the advisory lock that serializes appends and claims
//! across threads and processes. Records are only ever appended; the state
//! of a study is whatever replaying its journal produces.

mod lock;
pub mod record;
mod state;

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

pub use lock::{LockFile, LockGuard};
pub use record::{Event, JournalRecord, RecordKind, StudyCreated};
pub use state::{StudyState, Trial, TrialState};

use crate::config::StudyConfig;
use crate::error::StoreError;
use crate::space::SearchSpace;
use record::{encode_line, FORMAT_VERSION};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const LOCK_FILE: &str = "journal.lock";

pub fn journal_path(dir: &Path) -> PathBuf {
    dir.join(JOURNAL_FILE)
}

/// When an append is considered done.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// Written to the operating system before `append` returns; survives a
    /// killed process.
    #[default]
    Flush,
    /// Additionally `fdatasync`ed; survives power loss.
    Sync,
}

/// Incremental journal reader: feeds complete lines into a state.
struct Replayer {
    state: Option<StudyState>,
    lines: usize,
}

impl Replayer {
    fn new() -> Replayer {
        Replayer { state: None, lines: 0 }
    }

    fn after_seq(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.last_seq)
    }

    fn corrupt(&self, reason: impl Into<String>) -> StoreError {
        StoreError::Corrupt {
            line: self.lines,
            after_seq: self.after_seq(),
            reason: reason.into(),
        }
    }

    fn ingest_line(&mut self, path: &Path, line: &[u8]) -> Result<(), StoreError> {
        self.lines += 1;
        let parsed = std::str::from_utf8(line)
            .map_err(|e| e.to_string())
            .and_then(|text| serde_json::from_str::<JournalRecord>(text).map_err(|e| e.to_string()));
        let record = match (parsed, &self.state) {
            (Ok(record), _) => record,
            (Err(_), None) => return Err(StoreError::NotAJournal(path.to_path_buf())),
            (Err(reason), Some(_)) => return Err(self.corrupt(reason)),
        };
        self.ingest(path, record)
    }

    fn ingest(&mut self, path: &Path, record: JournalRecord) -> Result<(), StoreError> {
        let Some(state) = &mut self.state else {
            let state = StudyState::genesis(&record).map_err(|_| StoreError::NotAJournal(path.to_path_buf()))?;
            self.state = Some(state);
            return Ok(());
        };
        if record.seq <= state.last_seq {
            let reason = format!("seq {} does not increase", record.seq);
            return Err(self.corrupt(reason));
        }
        let event = Event::from_record(&record).map_err(|e| self.corrupt(format!("seq {}: {e}", record.seq)))?;
        let state = self.state.as_mut().expect("checked above");
        if let Err(e) = state.validate(&event, false) {
            let reason = format!("seq {}: {e}", record.seq);
            return Err(self.corrupt(reason));
        }
        state.apply(&record, event);
        Ok(())
    }
}

/// Splits `bytes` into LF-terminated lines; returns them and the length of
/// the complete prefix. Anything after the last LF is a torn write.
fn complete_lines(bytes: &[u8]) -> (Vec<&[u8]>, usize) {
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let lines = bytes[..complete].split_inclusive(|&b| b == b'\n').map(|l| &l[..l.len() - 1]);
    (lines.collect(), complete)
}

fn read_from(path: &Path, offset: u64) -> Result<Vec<u8>, StoreError> {
    let io = |e| StoreError::io(path, e);
    let mut file = File::open(path).map_err(io)?;
    file.seek(SeekFrom::Start(offset)).map_err(io)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(io)?;
    Ok(bytes)
}

/// Parses every complete record of a journal without modifying it.
pub fn read_journal(dir: &Path) -> Result<Vec<JournalRecord>, StoreError> {
    let path = journal_path(dir);
    if !path.exists() {
        return Err(StoreError::NotAJournal(path));
    }
    let bytes = read_from(&path, 0)?;
    let (lines, complete) = complete_lines(&bytes);
    if complete < bytes.len() {
        log::warn!("{}: ignoring torn trailing record", path.display());
    }
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.into_iter().enumerate() {
        let record = serde_json::from_slice::<JournalRecord>(line).map_err(|e| match i {
            0 => StoreError::NotAJournal(path.clone()),
            _ => StoreError::Corrupt {
                line: i + 1,
                after_seq: records.last().map_or(0, |r: &JournalRecord| r.seq),
                reason: e.to_string(),
            },
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(StoreError::NotAJournal(path));
    }
    Ok(records)
}

/// Rebuilds a study state from records, validating the lifecycle.
pub fn replay(dir: &Path, records: &[JournalRecord]) -> Result<StudyState, StoreError> {
    let path = journal_path(dir);
    let mut replayer = Replayer::new();
    for record in records {
        replayer.lines += 1;
        replayer.ingest(&path, record.clone())?;
    }
    let mut state = replayer.state.ok_or(StoreError::NotAJournal(path))?;
    state.config.study_path = dir.to_path_buf();
    Ok(state)
}

/// Loads a study after a crash: truncates a torn final line, replays the
/// journal and moves interrupted trials back to pending.
pub fn recover(dir: &Path) -> Result<StudyState, StoreError> {
    let mut store = TrialStore::open(dir, "recover")?;
    store.requeue_running();
    Ok(store.replayer.state.take().expect("open stores have a state"))
}

/// Handle on a study journal. Several handles, in one process or many, may
/// append to the same journal; every append and claim runs under the lock
/// after catching up with records written by others.
pub struct TrialStore {
    dir: PathBuf,
    journal: PathBuf,
    file: File,
    lock: LockFile,
    held: Option<LockGuard>,
    worker_id: String,
    replayer: Replayer,
    offset: u64,
    pub durability: Durability,
}

impl TrialStore {
    /// Starts a new study at `dir`, writing its `study_created` record.
    pub fn create(
        dir: &Path,
        space: &SearchSpace,
        config: &StudyConfig,
        worker_id: &str,
    ) -> Result<TrialStore, StoreError> {
        fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        let journal = journal_path(dir);
        let lock = LockFile::new(dir.join(LOCK_FILE), worker_id);
        let _guard = lock.acquire()?;
        if fs::metadata(&journal).is_ok_and(|m| m.len() > 0) {
            return Err(StoreError::AlreadyExists(dir.to_path_buf()));
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal)
            .map_err(|e| StoreError::io(&journal, e))?;
        let created = StudyCreated {
            format: FORMAT_VERSION,
            space_hash: space.fingerprint(),
            space: space.clone(),
            config: config.clone(),
        };
        let record = JournalRecord {
            seq: 1,
            kind: RecordKind::StudyCreated,
            ts: lock::now_ms(),
            worker_id: worker_id.to_string(),
            trial_id: None,
            payload: Event::StudyCreated(Box::new(created)).payload(),
        };
        let line = encode_line(&record);
        file.write_all(line.as_bytes()).map_err(|e| StoreError::io(&journal, e))?;
        file.sync_all().map_err(|e| StoreError::io(&journal, e))?;
        let mut replayer = Replayer::new();
        replayer.ingest_line(&journal, line.trim_end().as_bytes())?;
        if let Some(state) = &mut replayer.state {
            state.config.study_path = dir.to_path_buf();
        }
        Ok(TrialStore {
            dir: dir.to_path_buf(),
            journal,
            file,
            lock,
            held: None,
            worker_id: worker_id.to_string(),
            replayer,
            offset: line.len() as u64,
            durability: Durability::default(),
        })
    }

    /// Opens an existing study, truncating a torn final line if present.
    /// Trials left running stay running; see [`Self::requeue_running`].
    pub fn open(dir: &Path, worker_id: &str) -> Result<TrialStore, StoreError> {
        let journal = journal_path(dir);
        if !journal.is_file() {
            return Err(StoreError::NotAJournal(journal));
        }
        let file = OpenOptions::new()
            .append(true)
            .open(&journal)
            .map_err(|e| StoreError::io(&journal, e))?;
        let mut store = TrialStore {
            dir: dir.to_path_buf(),
            lock: LockFile::new(dir.join(LOCK_FILE), worker_id),
            journal,
            file,
            held: None,
            worker_id: worker_id.to_string(),
            replayer: Replayer::new(),
            offset: 0,
            durability: Durability::default(),
        };
        store.locked(|_| Ok(()))?;
        if store.replayer.state.is_none() {
            return Err(StoreError::NotAJournal(store.journal));
        }
        if let Some(state) = &mut store.replayer.state {
            state.config.study_path = dir.to_path_buf();
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn journal_path(&self) -> &Path {
        &self.journal
    }

    pub fn worker_id(&self) -> &str {
        &self.worker_id
    }

    pub fn lock_file(&mut self) -> &mut LockFile {
        &mut self.lock
    }

    /// State as of the last record this handle has seen.
    pub fn state(&self) -> &StudyState {
        self.replayer.state.as_ref().expect("open stores have a state")
    }

    /// Keeps the lock between calls, for a single long-lived writer.
    pub fn hold_lock(&mut self) -> Result<(), StoreError> {
        if self.held.is_none() {
            self.held = Some(self.lock.acquire()?);
        }
        Ok(())
    }

    pub fn release_lock(&mut self) {
        self.held = None;
    }

    /// Catches up with records appended through other handles.
    pub fn refresh(&mut self) -> Result<(), StoreError> {
        self.locked(|_| Ok(()))
    }

    /// Moves trials left running by a crashed worker back to pending, in
    /// this handle's view. Their next claim starts a fresh attempt.
    pub fn requeue_running(&mut self) -> Vec<u64> {
        let requeued = self.replayer.state.as_mut().map(StudyState::requeue_running).unwrap_or_default();
        if !requeued.is_empty() {
            log::info!("requeued interrupted trials {requeued:?}");
        }
        requeued
    }

    pub fn append(&mut self, event: Event) -> Result<u64, StoreError> {
        let worker = self.worker_id.clone();
        self.append_as(&worker, event)
    }

    /// Appends a record attributed to `worker_id`; returns its seq.
    pub fn append_as(&mut self, worker_id: &str, event: Event) -> Result<u64, StoreError> {
        self.locked(|store| store.append_locked(worker_id, event))
    }

    /// Atomically moves the lowest-id pending trial to running.
    pub fn claim_next(&mut self, worker_id: &str) -> Result<Option<Trial>, StoreError> {
        self.locked(|store| {
            let Some(trial_id) = store.state().next_pending().map(|t| t.trial_id) else {
                return Ok(None);
            };
            store.append_locked(worker_id, Event::TrialClaimed { trial_id })?;
            Ok(store.state().trials.get(&trial_id).cloned())
        })
    }

    fn locked<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, StoreError>) -> Result<T, StoreError> {
        let _guard = match self.held {
            Some(_) => None,
            None => Some(self.lock.acquire()?),
        };
        self.sync_tail()?;
        f(self)
    }

    /// Must run under the lock: nobody is mid-append, so an unterminated
    /// tail was left by a crashed writer.
    fn sync_tail(&mut self) -> Result<(), StoreError> {
        let len = fs::metadata(&self.journal).map_err(|e| StoreError::io(&self.journal, e))?.len();
        if len == self.offset {
            return Ok(());
        }
        if len < self.offset {
            return Err(StoreError::Corrupt {
                line: self.replayer.lines,
                after_seq: self.replayer.after_seq(),
                reason: "journal shrank underneath an open handle".into(),
            });
        }
        let bytes = read_from(&self.journal, self.offset)?;
        let (lines, complete) = complete_lines(&bytes);
        for line in lines {
            self.replayer.ingest_line(&self.journal, line)?;
        }
        self.offset += complete as u64;
        if complete < bytes.len() {
            log::warn!(
                "{}: truncating torn trailing record ({} bytes)",
                self.journal.display(),
                bytes.len() - complete
            );
            self.file.set_len(self.offset).map_err(|e| StoreError::io(&self.journal, e))?;
        }
        if self.replayer.state.is_none() {
            return Err(StoreError::NotAJournal(self.journal.clone()));
        }
        Ok(())
    }

    fn append_locked(&mut self, worker_id: &str, event: Event) -> Result<u64, StoreError> {
        let state = self.state();
        if state.is_sealed() {
            return Err(StoreError::Sealed);
        }
        state.validate(&event, true).map_err(StoreError::Lifecycle)?;
        let record = JournalRecord {
            seq: state.last_seq + 1,
            kind: event.kind(),
            ts: lock::now_ms().max(state.last_ts),
            worker_id: worker_id.to_string(),
            trial_id: event.trial_id(),
            payload: event.payload(),
        };
        let line = encode_line(&record);
        let io = |e| StoreError::io(&self.journal, e);
        self.file.write_all(line.as_bytes()).map_err(io)?;
        if self.durability == Durability::Sync {
            self.file.sync_data().map_err(|e| StoreError::io(&self.journal, e))?;
        }
        self.offset += line.len() as u64;
        self.replayer.lines += 1;
        let state = self.replayer.state.as_mut().expect("open stores have a state");
        state.apply(&record, event);
        Ok(record.seq)
    }
}

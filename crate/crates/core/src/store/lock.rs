//! Advisory lock file guarding journal appends and claims.
//!
//! The lock is a sibling file created with create-exclusive semantics. Its
//! content is `<worker_id> <pid> <ts_ms> <nonce>`. A lock is stale when its
//! process is gone (checked through `/proc` where available) or when it is
//! older than the stale timeout.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crate::error::StoreError;

static NONCE: AtomicU64 = AtomicU64::new(0);

pub(crate) fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone)]
pub struct LockFile {
    path: PathBuf,
    owner: String,
    pub timeout: Duration,
    pub stale_after: Duration,
}

/// Held lock; removed on drop if it still carries this holder's token.
#[derive(Debug)]
pub struct LockGuard {
    path: PathBuf,
    token: String,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        if fs::read_to_string(&self.path).is_ok_and(|content| content == self.token) {
            let _ = fs::remove_file(&self.path);
        }
    }
}

struct Holder {
    pid: Option<u32>,
    ts: Option<u64>,
}

fn parse_holder(content: &str) -> Holder {
    let mut fields = content.split_whitespace().skip(1);
    Holder {
        pid: fields.next().and_then(|p| p.parse().ok()),
        ts: fields.next().and_then(|t| t.parse().ok()),
    }
}

fn process_gone(pid: u32) -> bool {
    let proc_root = Path::new("/proc");
    proc_root.join("self").exists() && !proc_root.join(pid.to_string()).exists()
}

impl LockFile {
    pub fn new(path: impl Into<PathBuf>, owner: impl Into<String>) -> LockFile {
        LockFile {
            path: path.into(),
            owner: owner.into().replace(char::is_whitespace, "_"),
            timeout: Duration::from_secs(30),
            stale_after: Duration::from_secs(60),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Blocks with exponential backoff until the lock is taken or the timeout
    /// passes.
    pub fn acquire(&self) -> Result<LockGuard, StoreError> {
        let started = Instant::now();
        let mut backoff = Duration::from_micros(20);
        loop {
            match self.try_acquire()? {
                Some(guard) => return Ok(guard),
                None if self.is_stale() => {
                    log::warn!("breaking stale journal lock {}", self.path.display());
                    self.break_lock();
                }
                None => {
                    if started.elapsed() >= self.timeout {
                        return Err(StoreError::LockTimeout(self.path.clone()));
                    }
                    thread::sleep(backoff);
                    backoff = (backoff * 2).min(Duration::from_millis(2));
                }
            }
        }
    }

    pub fn try_acquire(&self) -> Result<Option<LockGuard>, StoreError> {
        match OpenOptions::new().write(true).create_new(true).open(&self.path) {
            Ok(mut file) => {
                let token = format!(
                    "{} {} {} {}\n",
                    self.owner,
                    std::process::id(),
                    now_ms(),
                    NONCE.fetch_add(1, Ordering::Relaxed)
                );
                file.write_all(token.as_bytes()).map_err(|e| StoreError::io(&self.path, e))?;
                Ok(Some(LockGuard { path: self.path.clone(), token }))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Ok(None),
            Err(e) => Err(StoreError::io(&self.path, e)),
        }
    }

    fn is_stale(&self) -> bool {
        let Ok(content) = fs::read_to_string(&self.path) else {
            return false;
        };
        let holder = parse_holder(&content);
        if holder.pid.is_some_and(process_gone) {
            return true;
        }
        let age_ms = match holder.ts {
            Some(ts) => now_ms().saturating_sub(ts),
            // half-written lock: judge by the file's age
            None => fs::metadata(&self.path)
                .and_then(|m| m.modified())
                .ok()
                .and_then(|t| t.elapsed().ok())
                .map_or(0, |d| d.as_millis() as u64),
        };
        age_ms > self.stale_after.as_millis() as u64
    }

    fn break_lock(&self) {
        // rename first so two breakers cannot both delete a fresh lock
        let grave = self.path.with_extension(format!("stale.{}.{}", std::process::id(), NONCE.fetch_add(1, Ordering::Relaxed)));
        if fs::rename(&self.path, &grave).is_ok() {
            let _ = fs::remove_file(&grave);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exclusive_until_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let lock = LockFile::new(dir.path().join("journal.lock"), "a");
        let guard = lock.acquire().unwrap();
        assert!(lock.try_acquire().unwrap().is_none());
        let content = fs::read_to_string(lock.path()).unwrap();
        assert!(content.starts_with(&format!("a {} ", std::process::id())));
        drop(guard);
        assert!(!lock.path().exists());
        assert!(lock.try_acquire().unwrap().is_some());
    }

    #[test]
    fn times_out_on_live_holder() {
        let dir = tempfile::tempdir().unwrap();
        let mut lock = LockFile::new(dir.path().join("journal.lock"), "a");
        lock.timeout = Duration::from_millis(30);
        let _held = lock.acquire().unwrap();
        assert!(matches!(lock.acquire(), Err(StoreError::LockTimeout(_))));
    }

    #[test]
    fn breaks_stale_lock() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.lock");
        fs::write(&path, format!("ghost {} {} 0\n", std::process::id(), now_ms() - 120_000)).unwrap();
        let lock = LockFile::new(&path, "b");
        let guard = lock.acquire().unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("b "));
        drop(guard);
    }

    #[test]
    fn foreign_lock_survives_guard_drop() {
        let dir = tempfile::tempdir().unwrap();
        let lock = LockFile::new(dir.path().join("journal.lock"), "a");
        let guard = lock.acquire().unwrap();
        fs::write(lock.path(), "other 1 1 1\n").unwrap();
        drop(guard);
        assert!(lock.path().exists());
    }
}

//! Sessions on disk, with a byte-budgeted LRU of loaded sessions in memory.
//!
//! Each session lives in `<root>/<id>/`. Every mutation is written through,
//! so unloading a session only drops memory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use hyperseg_core::Result;

use crate::session::{Session, STATE_FILE};

/// Slot guarding one session. `None` means not loaded.
pub type Slot = Arc<tokio::sync::Mutex<Option<Session>>>;

struct Entry {
    slot: Slot,
    last_used: u64,
    bytes: usize,
}

#[derive(Default)]
struct Inner {
    entries: HashMap<String, Entry>,
    tick: u64,
}

pub struct SessionStore {
    root: PathBuf,
    budget: usize,
    inner: Mutex<Inner>,
}

/// Session ids are 32 lowercase hex digits.
pub fn valid_id(id: &str) -> bool {
    id.len() == 32 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

pub fn new_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

impl SessionStore {
    pub fn open(root: &Path, budget: usize) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| hyperseg_core::Error::Io {
            path: root.to_path_buf(),
            source: e,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            budget,
            inner: Mutex::new(Inner::default()),
        })
    }

    pub fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers a new, already persisted session.
    pub fn insert(&self, session: Session) -> Slot {
        let id = session.id.clone();
        let bytes = session.bytes();
        let slot = Arc::new(tokio::sync::Mutex::new(Some(session)));
        let mut inner = self.lock();
        inner.tick += 1;
        let last_used = inner.tick;
        inner.entries.insert(
            id,
            Entry {
                slot: slot.clone(),
                last_used,
                bytes,
            },
        );
        slot
    }

    /// Slot for `id`, known in memory or present on disk.
    pub fn slot(&self, id: &str) -> Option<Slot> {
        if !valid_id(id) {
            return None;
        }
        let mut inner = self.lock();
        inner.tick += 1;
        let tick = inner.tick;
        if let Some(e) = inner.entries.get_mut(id) {
            e.last_used = tick;
            return Some(e.slot.clone());
        }
        if !self.dir(id).join(STATE_FILE).is_file() {
            return None;
        }
        let slot: Slot = Arc::new(tokio::sync::Mutex::new(None));
        inner.entries.insert(
            id.to_string(),
            Entry {
                slot: slot.clone(),
                last_used: tick,
                bytes: 0,
            },
        );
        Some(slot)
    }

    /// Records the resident size of a session after a request.
    pub fn account(&self, id: &str, bytes: usize) {
        if let Some(e) = self.lock().entries.get_mut(id) {
            e.bytes = bytes;
        }
    }

    pub fn forget(&self, id: &str) {
        self.lock().entries.remove(id);
    }

    pub fn resident_bytes(&self) -> usize {
        self.lock().entries.values().map(|e| e.bytes).sum()
    }

    /// Unloads least recently used sessions, except `keep`, until the
    /// resident total fits the budget. Busy sessions are skipped.
    pub fn enforce_budget(&self, keep: &str) {
        let mut inner = self.lock();
        let mut total: usize = inner.entries.values().map(|e| e.bytes).sum();
        if total <= self.budget {
            return;
        }
        let mut order: Vec<(u64, String)> = inner
            .entries
            .iter()
            .filter(|(id, e)| id.as_str() != keep && e.bytes > 0)
            .map(|(id, e)| (e.last_used, id.clone()))
            .collect();
        order.sort();
        for (_, id) in order {
            if total <= self.budget {
                break;
            }
            let e = inner.entries.get_mut(&id).expect("listed");
            if let Ok(mut guard) = e.slot.try_lock() {
                *guard = None;
                total -= e.bytes;
                e.bytes = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids() {
        let id = new_id();
        assert!(valid_id(&id));
        assert_ne!(id, new_id());
        for bad in ["", "../etc", &"A".repeat(32), &"0".repeat(31)] {
            assert!(!valid_id(bad));
        }
    }

    #[test]
    fn unknown_ids_have_no_slot() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), 0).unwrap();
        assert!(store.slot(&"0".repeat(32)).is_none());
        assert!(store.slot("..").is_none());
    }
}

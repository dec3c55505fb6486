//! Persistence and TTL caching for accounts, passkeys, ceremony sessions,
//! revoked tokens and short-lived verification codes.
//!
//! [`Store`] keeps all state in memory behind a lock. A [`Backend`] decides
//! whether durable state is also written out: [`MemoryBackend`] keeps nothing,
//! [`JsonFileBackend`] rewrites a single JSON snapshot atomically after every
//! durable mutation. Expiry is enforced on read using the injected [`Clock`];
//! [`Store::sweep`] only reclaims memory.

mod records;
mod snapshot;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

use crate::clock::SharedClock;

pub use records::{
    CeremonyPurpose, PasskeyCredentialRecord, PasskeySessionRecord, SessionStatus,
    TempRegistration, TokenBlacklistEntry, UserId, UserRecord,
};
pub use snapshot::{JsonFileBackend, Snapshot, SnapshotError, SNAPSHOT_VERSION};

/// Default lifetime of a blacklist entry.
pub const BLACKLIST_TTL: Duration = Duration::hours(1);

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("{field} is already used by another record")]
    UniquenessViolation { field: &'static str },
    #[error("record not found")]
    NotFound,
    #[error("temporary registration has not been verified")]
    NotVerified,
    #[error("signature counter regression: stored {stored}, received {received}")]
    CounterRegression { stored: u32, received: u32 },
    #[error("invalid record: {0}")]
    Invalid(&'static str),
    #[error("failed to persist state: {0}")]
    Persist(String),
}

/// Why a ceremony session could not be resolved.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SessionError {
    #[error("ceremony session not found")]
    NotFound,
    #[error("ceremony session has already been used")]
    AlreadyUsed,
    #[error("ceremony session has expired")]
    Expired,
}

/// What to do with a cached value inside [`Store::ttl_update`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TtlUpdate {
    Keep,
    /// Replace the value; the deadline is unchanged.
    Replace(Vec<u8>),
    Remove,
}

/// Where durable state goes after a mutation.
pub trait Backend: Send + Sync {
    fn save(&self, snapshot: &Snapshot) -> Result<(), SnapshotError>;
}

/// Keeps nothing outside the process.
#[derive(Debug, Default)]
pub struct MemoryBackend;

impl Backend for MemoryBackend {
    fn save(&self, _snapshot: &Snapshot) -> Result<(), SnapshotError> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct CacheEntry {
    value: Vec<u8>,
    expires_at: DateTime<Utc>,
}

#[derive(Debug, Default, Clone)]
pub(crate) struct State {
    users: HashMap<UserId, UserRecord>,
    temp: HashMap<String, TempRegistration>,
    credentials: HashMap<Vec<u8>, PasskeyCredentialRecord>,
    sessions: HashMap<String, PasskeySessionRecord>,
    blacklist: HashMap<String, TokenBlacklistEntry>,
    cache: HashMap<String, CacheEntry>,
}

pub struct Store {
    state: RwLock<State>,
    clock: SharedClock,
    backend: Box<dyn Backend>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").finish_non_exhaustive()
    }
}

impl Store {
    pub fn in_memory(clock: SharedClock) -> Self {
        Self::with_backend(clock, Box::new(MemoryBackend))
    }

    pub fn with_backend(clock: SharedClock, backend: Box<dyn Backend>) -> Self {
        Self {
            state: RwLock::new(State::default()),
            clock,
            backend,
        }
    }

    /// Opens a JSON-file-backed store, loading the snapshot if the file exists.
    pub fn open_json(path: impl Into<PathBuf>, clock: SharedClock) -> Result<Self, SnapshotError> {
        let path = path.into();
        let state = if path.exists() {
            snapshot::read_state(&path, clock.now())?
        } else {
            State::default()
        };
        Ok(Self {
            state: RwLock::new(state),
            clock,
            backend: Box::new(JsonFileBackend::new(path)),
        })
    }

    /// Loads a snapshot into an in-memory store. Expired entries are dropped.
    pub fn load_snapshot(path: &Path, clock: SharedClock) -> Result<Self, SnapshotError> {
        let state = snapshot::read_state(path, clock.now())?;
        Ok(Self {
            state: RwLock::new(state),
            clock,
            backend: Box::new(MemoryBackend),
        })
    }

    /// Writes the unexpired durable state to `path` (temp file + rename).
    pub fn persist_snapshot(&self, path: &Path) -> Result<(), SnapshotError> {
        let snap = Snapshot::from_state(&self.read(), self.clock.now());
        snapshot::write_atomic(path, &snap)
    }

    /// Current durable state, minus expired entries.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot::from_state(&self.read(), self.clock.now())
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().expect("store lock poisoned")
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().expect("store lock poisoned")
    }

    fn save(&self, state: &State) -> Result<(), StoreError> {
        self.backend
            .save(&Snapshot::from_state(state, self.clock.now()))
            .map_err(|e| StoreError::Persist(e.to_string()))
    }

    // ---- users ----

    pub fn upsert_user(&self, mut record: UserRecord) -> Result<UserId, StoreError> {
        record.email = normalize_email(&record.email);
        if !is_plausible_email(&record.email) {
            return Err(StoreError::Invalid("malformed email"));
        }
        let mut state = self.write();
        for other in state.users.values() {
            if other.user_id == record.user_id {
                continue;
            }
            if other.email == record.email {
                return Err(StoreError::UniquenessViolation { field: "email" });
            }
            if record.oauth_subject.is_some() && other.oauth_subject == record.oauth_subject {
                return Err(StoreError::UniquenessViolation {
                    field: "oauth_subject",
                });
            }
        }
        let id = record.user_id.clone();
        state.users.insert(id.clone(), record);
        self.save(&state)?;
        Ok(id)
    }

    pub fn find_user(&self, id: &UserId) -> Option<UserRecord> {
        self.read().users.get(id).cloned()
    }

    pub fn find_user_by_email(&self, email: &str) -> Option<UserRecord> {
        let email = normalize_email(email);
        self.read()
            .users
            .values()
            .find(|u| u.email == email)
            .cloned()
    }

    pub fn find_user_by_oauth_subject(&self, subject: &str) -> Option<UserRecord> {
        self.read()
            .users
            .values()
            .find(|u| u.oauth_subject.as_deref() == Some(subject))
            .cloned()
    }

    pub fn list_users(&self) -> Vec<UserRecord> {
        let mut users: Vec<_> = self.read().users.values().cloned().collect();
        users.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.email.cmp(&b.email)));
        users
    }

    // ---- temporary registrations ----

    /// Creates the staging row for `email` unless one already exists.
    pub fn stage_registration(&self, email: &str) -> Result<TempRegistration, StoreError> {
        let email = normalize_email(email);
        let now = self.clock.now();
        let mut state = self.write();
        let row = state
            .temp
            .entry(email.clone())
            .or_insert_with(|| TempRegistration::new(email, now))
            .clone();
        self.save(&state)?;
        Ok(row)
    }

    pub fn temp_registration(&self, email: &str) -> Option<TempRegistration> {
        self.read().temp.get(&normalize_email(email)).cloned()
    }

    pub fn mark_registration_verified(&self, email: &str) -> Result<(), StoreError> {
        let mut state = self.write();
        let row = state
            .temp
            .get_mut(&normalize_email(email))
            .ok_or(StoreError::NotFound)?;
        row.otp_verified = true;
        self.save(&state)
    }

    /// Atomically turns a verified staging row into `user` and deletes the row.
    pub fn promote_registration(&self, user: UserRecord) -> Result<UserId, StoreError> {
        let email = normalize_email(&user.email);
        let mut state = self.write();
        match state.temp.get(&email) {
            None => return Err(StoreError::NotFound),
            Some(row) if !row.otp_verified => return Err(StoreError::NotVerified),
            Some(_) => {}
        }
        if state.users.values().any(|u| u.email == email) {
            return Err(StoreError::UniquenessViolation { field: "email" });
        }
        let id = user.user_id.clone();
        state.users.insert(
            id.clone(),
            UserRecord {
                email: email.clone(),
                ..user
            },
        );
        state.temp.remove(&email);
        self.save(&state)?;
        Ok(id)
    }

    // ---- passkey credentials ----

    pub fn insert_credential(&self, record: PasskeyCredentialRecord) -> Result<(), StoreError> {
        let mut state = self.write();
        if state.credentials.contains_key(&record.credential_id) {
            return Err(StoreError::UniquenessViolation {
                field: "credential_id",
            });
        }
        if !state.users.contains_key(&record.user_id) {
            return Err(StoreError::NotFound);
        }
        state
            .credentials
            .insert(record.credential_id.clone(), record);
        self.save(&state)
    }

    pub fn credential(&self, credential_id: &[u8]) -> Option<PasskeyCredentialRecord> {
        self.read().credentials.get(credential_id).cloned()
    }

    pub fn credentials_for_user(&self, user_id: &UserId) -> Vec<PasskeyCredentialRecord> {
        let mut creds: Vec<_> = self
            .read()
            .credentials
            .values()
            .filter(|c| &c.user_id == user_id)
            .cloned()
            .collect();
        creds.sort_by_key(|a| a.created_at);
        creds
    }

    /// Stores a new signature counter. It must exceed the stored one unless both are 0.
    pub fn update_counter(&self, credential_id: &[u8], received: u32) -> Result<(), StoreError> {
        let mut state = self.write();
        let cred = state
            .credentials
            .get_mut(credential_id)
            .ok_or(StoreError::NotFound)?;
        let stored = cred.counter;
        if received > stored || (received == 0 && stored == 0) {
            cred.counter = received;
            self.save(&state)
        } else {
            Err(StoreError::CounterRegression { stored, received })
        }
    }

    pub fn delete_credential(
        &self,
        credential_id: &[u8],
    ) -> Result<PasskeyCredentialRecord, StoreError> {
        let mut state = self.write();
        let removed = state
            .credentials
            .remove(credential_id)
            .ok_or(StoreError::NotFound)?;
        self.save(&state)?;
        Ok(removed)
    }

    // ---- ceremony sessions ----

    pub fn insert_session(&self, record: PasskeySessionRecord) -> Result<(), StoreError> {
        let mut state = self.write();
        if state.sessions.contains_key(&record.session_id) {
            return Err(StoreError::UniquenessViolation {
                field: "session_id",
            });
        }
        state.sessions.insert(record.session_id.clone(), record);
        self.save(&state)
    }

    /// The session as currently stored; a pending session past its deadline is reported expired.
    pub fn session(&self, session_id: &str) -> Option<PasskeySessionRecord> {
        let now = self.clock.now();
        self.read().sessions.get(session_id).map(|s| {
            let mut s = s.clone();
            if s.status == SessionStatus::Pending && now >= s.expires_at {
                s.status = SessionStatus::Expired;
            }
            s
        })
    }

    /// Runs `verify` against a pending, unexpired session and moves it to
    /// `Completed` when `verify` returns true, otherwise to `Expired`.
    ///
    /// The check and the transition happen under one write lock, so two
    /// concurrent resolutions of a session cannot both succeed.
    pub fn resolve_session(
        &self,
        session_id: &str,
        verify: &mut dyn FnMut(&PasskeySessionRecord) -> bool,
    ) -> Result<SessionStatus, SessionError> {
        let now = self.clock.now();
        let mut state = self.write();
        let session = state
            .sessions
            .get_mut(session_id)
            .ok_or(SessionError::NotFound)?;
        match session.status {
            SessionStatus::Completed => return Err(SessionError::AlreadyUsed),
            SessionStatus::Expired if now < session.expires_at => {
                return Err(SessionError::AlreadyUsed)
            }
            SessionStatus::Expired => return Err(SessionError::Expired),
            SessionStatus::Pending if now >= session.expires_at => {
                session.status = SessionStatus::Expired;
                let _ = self.save(&state);
                return Err(SessionError::Expired);
            }
            SessionStatus::Pending => {}
        }
        let status = if verify(session) {
            SessionStatus::Completed
        } else {
            SessionStatus::Expired
        };
        session.status = status;
        // The transition already happened in memory; a failed write only
        // affects durability, never single-use semantics.
        let _ = self.save(&state);
        Ok(status)
    }

    // ---- token blacklist ----

    pub fn blacklist_add(&self, token: &str) -> Result<(), StoreError> {
        self.blacklist_add_with_ttl(token, BLACKLIST_TTL)
    }

    pub fn blacklist_add_with_ttl(&self, token: &str, ttl: Duration) -> Result<(), StoreError> {
        if token.is_empty() {
            return Err(StoreError::Invalid("empty token"));
        }
        let now = self.clock.now();
        let mut state = self.write();
        let live = state.blacklist.get(token).is_some_and(|e| e.is_live(now));
        if !live {
            state.blacklist.insert(
                token.to_owned(),
                TokenBlacklistEntry {
                    token: token.to_owned(),
                    created_at: now,
                    ttl_secs: ttl.num_seconds(),
                },
            );
            self.save(&state)?;
        }
        Ok(())
    }

    pub fn blacklist_contains(&self, token: &str) -> bool {
        let now = self.clock.now();
        self.read()
            .blacklist
            .get(token)
            .is_some_and(|e| e.is_live(now))
    }

    // ---- TTL cache ----

    pub fn ttl_put(&self, key: &str, value: Vec<u8>, ttl: Duration) {
        debug_assert!(ttl > Duration::zero(), "ttl must be positive");
        let expires_at = self.clock.now() + ttl;
        self.write()
            .cache
            .insert(key.to_owned(), CacheEntry { value, expires_at });
    }

    /// Inserts only if no live value exists. Returns whether it inserted.
    pub fn ttl_put_if_absent(&self, key: &str, value: Vec<u8>, ttl: Duration) -> bool {
        let now = self.clock.now();
        let mut state = self.write();
        if state.cache.get(key).is_some_and(|e| now < e.expires_at) {
            return false;
        }
        state.cache.insert(
            key.to_owned(),
            CacheEntry {
                value,
                expires_at: now + ttl,
            },
        );
        true
    }

    pub fn ttl_get(&self, key: &str) -> Option<Vec<u8>> {
        let now = self.clock.now();
        self.read()
            .cache
            .get(key)
            .filter(|e| now < e.expires_at)
            .map(|e| e.value.clone())
    }

    /// Removes and returns the value if it is still live.
    pub fn ttl_take(&self, key: &str) -> Option<Vec<u8>> {
        let now = self.clock.now();
        self.write()
            .cache
            .remove(key)
            .filter(|e| now < e.expires_at)
            .map(|e| e.value)
    }

    pub fn ttl_remove(&self, key: &str) {
        self.write().cache.remove(key);
    }

    /// Atomically inspects a live value and keeps, replaces or removes it.
    /// Returns the value seen by `f`, or `None` if the key was absent or expired.
    pub fn ttl_update(&self, key: &str, f: &mut dyn FnMut(&[u8]) -> TtlUpdate) -> Option<Vec<u8>> {
        let now = self.clock.now();
        let mut state = self.write();
        let entry = state.cache.get_mut(key)?;
        if now >= entry.expires_at {
            state.cache.remove(key);
            return None;
        }
        let seen = entry.value.clone();
        match f(&seen) {
            TtlUpdate::Keep => {}
            TtlUpdate::Replace(value) => entry.value = value,
            TtlUpdate::Remove => {
                state.cache.remove(key);
            }
        }
        Some(seen)
    }

    /// Drops expired cache values, blacklist entries and stale sessions.
    /// Returns how many entries were removed.
    pub fn sweep(&self) -> usize {
        let now = self.clock.now();
        let mut state = self.write();
        let before = state.cache.len() + state.blacklist.len() + state.sessions.len();
        state.cache.retain(|_, e| now < e.expires_at);
        state.blacklist.retain(|_, e| e.is_live(now));
        state.sessions.retain(|_, s| now < s.expires_at);
        let after = state.cache.len() + state.blacklist.len() + state.sessions.len();
        let _ = self.save(&state);
        before - after
    }
}

/// Convenience for callers that hold the store behind an `Arc`.
pub type SharedStore = Arc<Store>;

pub fn normalize_email(email: &str) -> String {
    email.trim().to_lowercase()
}

/// Minimal syntactic check: one `@`, non-empty local part, dotted domain, no whitespace.
pub fn is_plausible_email(email: &str) -> bool {
    let Some((local, domain)) = email.split_once('@') else {
        return false;
    };
    !local.is_empty()
        && !domain.contains('@')
        && domain.contains('.')
        && !domain.starts_with('.')
        && !domain.ends_with('.')
        && !email.chars().any(char::is_whitespace)
}

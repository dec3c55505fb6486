use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Backend, PasskeyCredentialRecord, PasskeySessionRecord, State, TempRegistration,
    TokenBlacklistEntry, UserRecord,
};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("unsupported snapshot version {0}")]
    Version(u32),
}

/// The on-disk document. TTL-cache values are not durable and are never written.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub version: u32,
    pub users: Vec<UserRecord>,
    pub temp_registrations: Vec<TempRegistration>,
    pub credentials: Vec<PasskeyCredentialRecord>,
    pub sessions: Vec<PasskeySessionRecord>,
    pub blacklist: Vec<TokenBlacklistEntry>,
}

impl Snapshot {
    pub(crate) fn from_state(state: &State, now: DateTime<Utc>) -> Self {
        let mut snap = Self {
            version: SNAPSHOT_VERSION,
            users: state.users.values().cloned().collect(),
            temp_registrations: state.temp.values().cloned().collect(),
            credentials: state.credentials.values().cloned().collect(),
            sessions: state
                .sessions
                .values()
                .filter(|s| now < s.expires_at)
                .cloned()
                .collect(),
            blacklist: state
                .blacklist
                .values()
                .filter(|e| e.is_live(now))
                .cloned()
                .collect(),
        };
        // stable output for diffs and tests
        snap.users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        snap.temp_registrations
            .sort_by(|a, b| a.email.cmp(&b.email));
        snap.credentials
            .sort_by(|a, b| a.credential_id.cmp(&b.credential_id));
        snap.sessions
            .sort_by(|a, b| a.session_id.cmp(&b.session_id));
        snap.blacklist.sort_by(|a, b| a.token.cmp(&b.token));
        snap
    }

    fn into_state(self, now: DateTime<Utc>) -> State {
        State {
            users: self
                .users
                .into_iter()
                .map(|u| (u.user_id.clone(), u))
                .collect(),
            temp: self
                .temp_registrations
                .into_iter()
                .map(|t| (t.email.clone(), t))
                .collect(),
            credentials: self
                .credentials
                .into_iter()
                .map(|c| (c.credential_id.clone(), c))
                .collect(),
            sessions: self
                .sessions
                .into_iter()
                .filter(|s| now < s.expires_at)
                .map(|s| (s.session_id.clone(), s))
                .collect(),
            blacklist: self
                .blacklist
                .into_iter()
                .filter(|e| e.is_live(now))
                .map(|e| (e.token.clone(), e))
                .collect(),
            cache: Default::default(),
        }
    }
}

pub(crate) fn read_state(path: &Path, now: DateTime<Utc>) -> Result<State, SnapshotError> {
    let text = fs::read_to_string(path)?;
    let snap: Snapshot =
        serde_json::from_str(&text).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
    if snap.version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version(snap.version));
    }
    Ok(snap.into_state(now))
}

pub(crate) fn write_atomic(path: &Path, snap: &Snapshot) -> Result<(), SnapshotError> {
    let json =
        serde_json::to_vec_pretty(snap).map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&json)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Rewrites one JSON document after each durable mutation.
#[derive(Debug, Clone)]
pub struct JsonFileBackend {
    path: PathBuf,
}

impl JsonFileBackend {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Backend for JsonFileBackend {
    fn save(&self, snapshot: &Snapshot) -> Result<(), SnapshotError> {
        write_atomic(&self.path, snapshot)
    }
}

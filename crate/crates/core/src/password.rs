//! Salted, cost-parameterized password hashing in the `$2b$` modular-crypt form.
//!
//! Parsing of stored hashes is strict: the encoding must be canonical, so any
//! change to a stored string either fails to parse or fails to verify.

use std::fmt;
use std::str::FromStr;

use base64::alphabet::BCRYPT;
use base64::engine::general_purpose::{GeneralPurpose, GeneralPurposeConfig};
use base64::engine::DecodePaddingMode;
use base64::Engine;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;
use thiserror::Error;

pub const DEFAULT_COST: u32 = 10;
pub const MIN_COST: u32 = 4;
pub const MAX_COST: u32 = 16;
pub const MIN_PASSWORD_BYTES: usize = 8;
pub const MAX_PASSWORD_BYTES: usize = 72;

const PREFIX: &str = "$2b$";
const SALT_CHARS: usize = 22;
const DIGEST_CHARS: usize = 31;
const ENCODED_LEN: usize = PREFIX.len() + 3 + SALT_CHARS + DIGEST_CHARS;

const STRICT_BCRYPT_B64: GeneralPurpose = GeneralPurpose::new(
    &BCRYPT,
    GeneralPurposeConfig::new()
        .with_encode_padding(false)
        .with_decode_padding_mode(DecodePaddingMode::RequireNone)
        .with_decode_allow_trailing_bits(false),
);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PasswordError {
    #[error("password must be between {MIN_PASSWORD_BYTES} and {MAX_PASSWORD_BYTES} bytes and contain no NUL")]
    PolicyViolation,
    #[error("cost {0} is outside {MIN_COST}..={MAX_COST}")]
    ConfigError(u32),
    #[error("malformed password hash: {0}")]
    FormatError(&'static str),
}

/// A self-describing password hash: algorithm, cost, salt and digest.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PasswordHash {
    encoded: String,
    cost: u32,
    salt: [u8; 16],
    digest: Vec<u8>,
}

impl PasswordHash {
    pub fn as_str(&self) -> &str {
        &self.encoded
    }

    pub fn cost(&self) -> u32 {
        self.cost
    }
}

impl fmt::Debug for PasswordHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("PasswordHash").field(&self.encoded).finish()
    }
}

impl fmt::Display for PasswordHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encoded)
    }
}

impl FromStr for PasswordHash {
    type Err = PasswordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != ENCODED_LEN || !s.is_ascii() {
            return Err(PasswordError::FormatError("length"));
        }
        let rest = s
            .strip_prefix(PREFIX)
            .ok_or(PasswordError::FormatError("prefix"))?;
        let (cost_text, rest) = rest.split_at(2);
        if !cost_text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(PasswordError::FormatError("cost"));
        }
        let cost: u32 = cost_text
            .parse()
            .map_err(|_| PasswordError::FormatError("cost"))?;
        // stored hashes above MAX_COST would let a tampered row stall verification
        if !(MIN_COST..=MAX_COST).contains(&cost) {
            return Err(PasswordError::FormatError("cost"));
        }
        let rest = rest
            .strip_prefix('$')
            .ok_or(PasswordError::FormatError("separator"))?;
        let (salt_text, digest_text) = rest.split_at(SALT_CHARS);
        let salt: [u8; 16] = STRICT_BCRYPT_B64
            .decode(salt_text)
            .map_err(|_| PasswordError::FormatError("salt"))?
            .try_into()
            .map_err(|_| PasswordError::FormatError("salt"))?;
        let digest = STRICT_BCRYPT_B64
            .decode(digest_text)
            .map_err(|_| PasswordError::FormatError("digest"))?;
        if digest.len() != 23 {
            return Err(PasswordError::FormatError("digest"));
        }
        Ok(Self {
            encoded: s.to_owned(),
            cost,
            salt,
            digest,
        })
    }
}

impl TryFrom<String> for PasswordHash {
    type Error = PasswordError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<PasswordHash> for String {
    fn from(value: PasswordHash) -> Self {
        value.encoded
    }
}

pub fn check_policy(plain: &str) -> Result<(), PasswordError> {
    let len = plain.len();
    if !(MIN_PASSWORD_BYTES..=MAX_PASSWORD_BYTES).contains(&len) || plain.contains('\0') {
        return Err(PasswordError::PolicyViolation);
    }
    Ok(())
}

pub fn hash_password(plain: &str, cost: u32) -> Result<PasswordHash, PasswordError> {
    check_policy(plain)?;
    if !(MIN_COST..=MAX_COST).contains(&cost) {
        return Err(PasswordError::ConfigError(cost));
    }
    let mut salt = [0u8; 16];
    rand::rngs::OsRng.fill_bytes(&mut salt);
    let parts =
        bcrypt::hash_with_salt(plain, cost, salt).map_err(|_| PasswordError::ConfigError(cost))?;
    parts.format_for_version(bcrypt::Version::TwoB).parse()
}

/// Re-hashes `plain` with the stored salt and cost and compares digests in constant time.
pub fn verify_password(plain: &str, stored: &PasswordHash) -> bool {
    if plain.len() > MAX_PASSWORD_BYTES || plain.contains('\0') {
        return false;
    }
    let Ok(parts) = bcrypt::hash_with_salt(plain, stored.cost, stored.salt) else {
        return false;
    };
    let Ok(candidate) = parts
        .format_for_version(bcrypt::Version::TwoB)
        .parse::<PasswordHash>()
    else {
        return false;
    };
    candidate.digest.ct_eq(&stored.digest).into()
}

/// Parses `stored` and verifies `plain` against it.
pub fn verify_encoded(plain: &str, stored: &str) -> Result<bool, PasswordError> {
    let hash: PasswordHash = stored.parse()?;
    Ok(verify_password(plain, &hash))
}

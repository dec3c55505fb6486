//! HOTP/TOTP (HMAC-SHA1) codes, secret provisioning, and random numeric
//! codes for email verification.

use std::fmt;

use data_encoding::BASE32_NOPAD;
use hmac::{Hmac, Mac};
use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use rand::rngs::OsRng;
use rand::{Rng, RngCore};
use sha1::Sha1;
use subtle::ConstantTimeEq;
use thiserror::Error;

pub const DEFAULT_SECRET_BYTES: usize = 20;
pub const MIN_SECRET_BYTES: usize = 16;
pub const DEFAULT_STEP: u64 = 30;
pub const DEFAULT_DIGITS: u32 = 6;
pub const DEFAULT_WINDOW: u32 = 1;
pub const MAX_WINDOW: u32 = 2;

const LABEL: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OtpError {
    #[error("secret must be at least {MIN_SECRET_BYTES} bytes, got {0}")]
    SecretTooShort(usize),
    #[error("entropy source failed: {0}")]
    EntropyError(String),
    #[error("invalid base32 secret")]
    BadSecret,
    #[error("unsupported digit count {0}")]
    BadDigits(u32),
    #[error("invalid provisioning uri: {0}")]
    BadUri(&'static str),
}

/// Shared HMAC key for HOTP/TOTP.
#[derive(Clone, PartialEq, Eq)]
pub struct OtpSecret {
    raw: Vec<u8>,
}

impl OtpSecret {
    pub fn from_bytes(raw: impl Into<Vec<u8>>) -> Self {
        Self { raw: raw.into() }
    }

    /// Parses RFC 4648 base32; case-insensitive, padding and spaces ignored.
    pub fn from_base32(text: &str) -> Result<Self, OtpError> {
        let cleaned: String = text
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '=')
            .map(|c| c.to_ascii_uppercase())
            .collect();
        let raw = BASE32_NOPAD
            .decode(cleaned.as_bytes())
            .map_err(|_| OtpError::BadSecret)?;
        if raw.is_empty() {
            return Err(OtpError::BadSecret);
        }
        Ok(Self { raw })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.raw
    }

    pub fn to_base32(&self) -> String {
        BASE32_NOPAD.encode(&self.raw)
    }
}

impl fmt::Debug for OtpSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("OtpSecret(..)")
    }
}

/// Numeric one-time code; leading zeros are significant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OtpCode(String);

impl OtpCode {
    pub fn new(digits: impl Into<String>) -> Self {
        Self(digits.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Constant-time equality on the digit strings.
    pub fn ct_matches(&self, other: &str) -> bool {
        self.0.len() == other.len() && bool::from(self.0.as_bytes().ct_eq(other.as_bytes()))
    }
}

impl fmt::Display for OtpCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn generate_secret(num_bytes: usize) -> Result<OtpSecret, OtpError> {
    if num_bytes < MIN_SECRET_BYTES {
        return Err(OtpError::SecretTooShort(num_bytes));
    }
    let mut raw = vec![0u8; num_bytes];
    OsRng
        .try_fill_bytes(&mut raw)
        .map_err(|e| OtpError::EntropyError(e.to_string()))?;
    Ok(OtpSecret { raw })
}

fn check_digits(digits: u32) -> Result<(), OtpError> {
    match digits {
        6 | 8 => Ok(()),
        d => Err(OtpError::BadDigits(d)),
    }
}

fn format_code(value: u32, digits: u32) -> OtpCode {
    let modulus = 10u32.pow(digits);
    OtpCode(format!(
        "{:0width$}",
        value % modulus,
        width = digits as usize
    ))
}

/// RFC 4226 HOTP: HMAC-SHA1 over the big-endian counter, dynamic truncation,
/// reduced mod 10^digits.
pub fn hotp(secret: &OtpSecret, counter: u64, digits: u32) -> Result<OtpCode, OtpError> {
    check_digits(digits)?;
    let mut mac = Hmac::<Sha1>::new_from_slice(&secret.raw).expect("hmac accepts any key length");
    mac.update(&counter.to_be_bytes());
    let digest = mac.finalize().into_bytes();
    let offset = (digest[19] & 0x0f) as usize;
    let truncated = u32::from_be_bytes([
        digest[offset] & 0x7f,
        digest[offset + 1],
        digest[offset + 2],
        digest[offset + 3],
    ]);
    Ok(format_code(truncated, digits))
}

/// Time step index for `unix_time`.
pub fn time_step(unix_time: u64, step: u64) -> u64 {
    unix_time / step
}

pub fn totp_at(
    secret: &OtpSecret,
    unix_time: u64,
    step: u64,
    digits: u32,
) -> Result<OtpCode, OtpError> {
    assert!(step > 0, "time step must be positive");
    hotp(secret, time_step(unix_time, step), digits)
}

/// The step index within `window` of `unix_time` that `code` matches, if any.
///
/// `window` is clamped to [`MAX_WINDOW`]. Every candidate step is computed
/// and compared so the work done does not depend on which step matched.
pub fn matching_step(
    secret: &OtpSecret,
    code: &str,
    unix_time: u64,
    step: u64,
    window: u32,
) -> Option<u64> {
    let digits = code.len() as u32;
    if check_digits(digits).is_err() || !code.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let window = u64::from(window.min(MAX_WINDOW));
    let center = time_step(unix_time, step);
    let mut found = None;
    for candidate in center.saturating_sub(window)..=center.saturating_add(window) {
        let expected = hotp(secret, candidate, digits).expect("digits checked");
        if expected.ct_matches(code) && found.is_none() {
            found = Some(candidate);
        }
    }
    found
}

pub fn verify_totp(secret: &OtpSecret, code: &str, unix_time: u64, window: u32) -> bool {
    matching_step(secret, code, unix_time, DEFAULT_STEP, window).is_some()
}

/// `otpauth://` URI for authenticator-app enrollment.
pub fn provisioning_uri(secret: &OtpSecret, account: &str, issuer: &str) -> String {
    assert!(
        !account.is_empty() && !issuer.is_empty(),
        "account and issuer must be non-empty"
    );
    let issuer_enc = utf8_percent_encode(issuer, LABEL).to_string();
    let account_enc = utf8_percent_encode(account, LABEL).to_string();
    format!(
        "otpauth://totp/{issuer_enc}:{account_enc}?secret={}&issuer={issuer_enc}&digits={DEFAULT_DIGITS}&period={DEFAULT_STEP}",
        secret.to_base32()
    )
}

/// Parsed fields of an `otpauth://totp/` URI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provisioning {
    pub secret: OtpSecret,
    pub account: String,
    pub issuer: String,
    pub digits: u32,
    pub period: u64,
}

pub fn parse_provisioning_uri(uri: &str) -> Result<Provisioning, OtpError> {
    let parsed = url::Url::parse(uri).map_err(|_| OtpError::BadUri("not a url"))?;
    if parsed.scheme() != "otpauth" || parsed.host_str() != Some("totp") {
        return Err(OtpError::BadUri("not an otpauth totp uri"));
    }
    let label = parsed.path().trim_start_matches('/');
    let (label_issuer, account) = match label.split_once(':') {
        Some((i, a)) => (Some(i), a),
        None => (None, label),
    };
    let decode = |s: &str| {
        percent_decode_str(s)
            .decode_utf8()
            .map(|c| c.into_owned())
            .map_err(|_| OtpError::BadUri("label encoding"))
    };
    let account = decode(account)?;
    let mut secret = None;
    let mut issuer = label_issuer.map(decode).transpose()?;
    let mut digits = DEFAULT_DIGITS;
    let mut period = DEFAULT_STEP;
    for (key, value) in parsed.query_pairs() {
        match key.as_ref() {
            "secret" => secret = Some(OtpSecret::from_base32(&value)?),
            "issuer" => issuer = Some(value.into_owned()),
            "digits" => digits = value.parse().map_err(|_| OtpError::BadUri("digits"))?,
            "period" => period = value.parse().map_err(|_| OtpError::BadUri("period"))?,
            _ => {}
        }
    }
    Ok(Provisioning {
        secret: secret.ok_or(OtpError::BadUri("missing secret"))?,
        account,
        issuer: issuer.ok_or(OtpError::BadUri("missing issuer"))?,
        digits,
        period,
    })
}

/// Uniformly random numeric code of `digits` digits (4..=8), zero-padded.
pub fn generate_numeric_code(digits: u32) -> OtpCode {
    assert!((4..=8).contains(&digits), "digits must be in 4..=8");
    let value = OsRng.gen_range(0..10u32.pow(digits));
    OtpCode(format!("{value:0width$}", width = digits as usize))
}

//! Passwordless authentication building blocks.
//!
//! Passkeys (WebAuthn, ES256) are the primary login method; email codes,
//! TOTP and OAuth2 are fallbacks. The [`emulator`] module is a software
//! authenticator that produces browser-shaped responses, so every ceremony
//! can run without a browser.
//!
//! | module | role |
//! |---|---|
//! | [`storage`] | users, passkeys, ceremony sessions, token blacklist, TTL cache, JSON snapshots |
//! | [`password`] | salted bcrypt hashing (`$2b$`) |
//! | [`otp`] | HOTP/TOTP, secret provisioning, numeric email codes |
//! | [`tokens`] | HS256 JWTs with blacklist revocation |
//! | [`webauthn`] | relying-party options, CBOR/COSE parsing, attestation and assertion checks |
//! | [`emulator`] | software FIDO2 authenticator with tamper knobs |
//! | [`flows`] | registration, login, OAuth and passkey flows, rate limiting, mail |

pub mod b64;
pub mod clock;
pub mod emulator;
pub mod flows;
pub mod otp;
pub mod password;
pub mod storage;
pub mod tokens;
pub mod webauthn;

pub use clock::{Clock, ManualClock, SharedClock, SystemClock};

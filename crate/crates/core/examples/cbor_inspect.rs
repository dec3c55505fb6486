//! Decode a CBOR hex string, or an emulator attestation object when none is given.
//!
//! ```text
//! cargo run --example cbor_inspect -- a2010261614178
//! ```

use passgate::emulator::EmulatedAuthenticator;
use passgate::storage::UserId;
use passgate::webauthn::{decode_cbor, parse_attestation_object, Challenge, RelyingParty};

fn from_hex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
        .collect()
}

fn main() {
    let bytes = match std::env::args().nth(1) {
        Some(hex) => from_hex(&hex).unwrap_or_else(|| {
            eprintln!("not hex: {hex}");
            std::process::exit(2)
        }),
        None => {
            let rp = RelyingParty::new("example.com", "Example", "https://example.com").unwrap();
            let options = rp.registration_options(
                Challenge([9; 32]),
                &UserId::random(),
                "ada@example.com",
                vec![],
            );
            let created = EmulatedAuthenticator::seeded(1)
                .emulate_create(&options, "https://example.com")
                .unwrap();
            let parsed = parse_attestation_object(&created.response.attestation_object).unwrap();
            println!("fmt: {}", parsed.format);
            println!("flags: {:#04x}", parsed.auth_data.flags.0);
            println!("counter: {}", parsed.auth_data.counter);
            created.response.attestation_object
        }
    };
    match decode_cbor(&bytes) {
        Ok(value) => println!("{value:#?}"),
        Err(e) => {
            println!("rejected: {e}");
            std::process::exit(1);
        }
    }
}

//! Enroll a TOTP authenticator and check codes around the current step.

use passgate::otp::{
    generate_secret, parse_provisioning_uri, provisioning_uri, totp_at, verify_totp,
};

fn main() {
    let secret = generate_secret(20).expect("os rng");
    let uri = provisioning_uri(&secret, "ada@example.com", "PassGate");
    println!("scan this: {uri}");

    let parsed = parse_provisioning_uri(&uri).unwrap();
    assert_eq!(parsed.secret, secret);

    let now = 1_700_000_000;
    let code = totp_at(&secret, now, 30, 6).unwrap();
    println!("code at {now}: {}", code.as_str());
    for offset in [-60i64, -30, 0, 30, 60] {
        let t = (now as i64 + offset) as u64;
        println!(
            "  verify at {offset:+}s: {}",
            verify_totp(&secret, code.as_str(), t, 1)
        );
    }
}

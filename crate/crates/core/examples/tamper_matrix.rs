//! Run every tamper knob against both ceremonies and print the rejection.

mod support;

use passgate::emulator::{EmulatedAuthenticator, Tamper};

fn main() {
    println!("{:<16} {:<44} authentication", "knob", "registration");
    for (n, knob) in Tamper::ALL.into_iter().enumerate() {
        let demo = support::setup();
        let user = demo.register("ada@example.com");
        let mut key = EmulatedAuthenticator::seeded(n as u64);
        let (sid, options) = demo.flows.passkey_register_options(&user).unwrap();
        let created = key.emulate_create(&options, support::ORIGIN).unwrap();
        demo.flows
            .passkey_register_verify(&user, &sid, &created, "k", "ip")
            .unwrap();
        let (sid, options) = demo.flows.passkey_auth_options(None).unwrap();
        let first = key.emulate_get_any(&options, support::ORIGIN).unwrap();
        demo.flows.passkey_auth_verify(&sid, &first, "ip").unwrap();

        key.set_tamper(Some(knob));
        // the tampered login runs first since a tampered create mints a fresh credential
        let (sid, options) = demo.flows.passkey_auth_options(None).unwrap();
        let asserted = key.emulate_get_any(&options, support::ORIGIN).unwrap();
        let auth = demo.flows.passkey_auth_verify(&sid, &asserted, "ip");
        let (sid, options) = demo.flows.passkey_register_options(&user).unwrap();
        let created = key.emulate_create(&options, support::ORIGIN).unwrap();
        let reg = demo
            .flows
            .passkey_register_verify(&user, &sid, &created, "k", "ip");
        println!(
            "{:<16} {:<44} {}",
            knob.as_str(),
            reg.map(|_| "ACCEPTED".into())
                .unwrap_or_else(|e| format!("{e:?}")),
            auth.map(|_| "ACCEPTED".into())
                .unwrap_or_else(|e| format!("{e:?}")),
        );
    }
}

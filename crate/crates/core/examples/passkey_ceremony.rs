//! Register a passkey with the software authenticator, then log in with it.

mod support;

use passgate::emulator::EmulatedAuthenticator;

fn main() {
    let demo = support::setup();
    let user = demo.register("ada@example.com");
    let mut key = EmulatedAuthenticator::new();

    let (sid, options) = demo.flows.passkey_register_options(&user).unwrap();
    let created = key.emulate_create(&options, support::ORIGIN).unwrap();
    let cred = demo
        .flows
        .passkey_register_verify(&user, &sid, &created, "Laptop", "example")
        .unwrap();
    println!("registered credential, counter {}", cred.counter);

    for round in 1..=3 {
        let (sid, options) = demo.flows.passkey_auth_options(None).unwrap();
        let assertion = key.emulate_get_any(&options, support::ORIGIN).unwrap();
        let token = demo
            .flows
            .passkey_auth_verify(&sid, &assertion, "example")
            .unwrap();
        let claims = demo.flows.authenticate(token.as_str()).unwrap();
        let stored = demo.flows.store().credential(&cred.credential_id).unwrap();
        println!(
            "login {round}: {} (stored counter {})",
            claims.email, stored.counter
        );
    }
    for p in demo.flows.list_passkeys(&user) {
        println!("{} {} counter={}", p.id, p.device_name, p.counter);
    }
}

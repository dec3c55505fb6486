//! Email-code registration followed by password + code login.

mod support;

use chrono::Duration;

fn main() {
    let demo = support::setup();
    let email = "grace@example.com";

    demo.flows.request_registration_code(email).unwrap();
    let code = demo.mail.last_code_for(email).unwrap();
    println!("mailed code: {code}");
    demo.clock.advance(Duration::seconds(29));
    demo.flows.verify_registration_code(email, &code).unwrap();
    let user = demo
        .flows
        .set_password_and_promote(email, "a long passphrase")
        .unwrap();
    println!("registered {user}");

    demo.flows
        .request_registration_code("late@example.com")
        .unwrap();
    let late = demo.mail.last_code_for("late@example.com").unwrap();
    demo.clock.advance(Duration::seconds(31));
    println!(
        "code after 31 s: {:?}",
        demo.flows
            .verify_registration_code("late@example.com", &late)
    );

    demo.flows
        .login_password_step(email, "a long passphrase", "example")
        .unwrap();
    let login_code = demo.mail.last_code_for(email).unwrap();
    let token = demo.flows.login_code_step(email, &login_code).unwrap();
    println!("logged in, token {}...", &token.as_str()[..24]);
}

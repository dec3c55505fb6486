use std::sync::Arc;

use chrono::Duration;

use super::*;
use crate::clock::{Clock, ManualClock};
use crate::emulator::{EmulatedAuthenticator, Tamper};
use crate::webauthn::WebAuthnError;

const ORIGIN: &str = "https://login.example.com";
const SECRET: &[u8] = b"0123456789abcdef0123456789abcdef";

struct Harness {
    clock: ManualClock,
    flows: Flows,
    mail: Arc<CaptureMailer>,
    oauth: Arc<MockProvider>,
}

fn harness() -> Harness {
    // 20 s into a rate-limit window
    let clock = ManualClock::at_unix(1_700_000_000);
    let shared: crate::SharedClock = Arc::new(clock.clone());
    let store = Arc::new(Store::in_memory(shared.clone()));
    let rp = RelyingParty::new("example.com", "PassGate", ORIGIN).unwrap();
    let mail = Arc::new(CaptureMailer::new());
    let oauth = Arc::new(MockProvider::new(
        "https://login.example.com/oauth/mock/authorize",
        "https://login.example.com/auth/oauth/callback",
        shared,
    ));
    let config = FlowConfig {
        bcrypt_cost: 4,
        ..FlowConfig::default()
    };
    let flows = Flows::new(store, rp, SECRET, mail.clone(), oauth.clone(), config).unwrap();
    Harness {
        clock,
        flows,
        mail,
        oauth,
    }
}

impl Harness {
    fn register(&self, email: &str, password: &str) -> UserId {
        self.flows.request_registration_code(email).unwrap();
        let code = self.mail.last_code_for(email).unwrap();
        self.flows.verify_registration_code(email, &code).unwrap();
        self.flows
            .set_password_and_promote(email, password)
            .unwrap()
    }

    fn add_passkey(&self, user: &UserId, auth: &mut EmulatedAuthenticator, name: &str) -> Vec<u8> {
        let (sid, options) = self.flows.passkey_register_options(user).unwrap();
        let response = auth.emulate_create(&options, ORIGIN).unwrap();
        self.flows
            .passkey_register_verify(user, &sid, &response, name, "ip")
            .unwrap()
            .credential_id
    }

    fn passkey_login(&self, auth: &mut EmulatedAuthenticator) -> Result<SignedToken, FlowError> {
        let (sid, options) = self.flows.passkey_auth_options(None).unwrap();
        let response = auth.emulate_get_any(&options, ORIGIN).unwrap();
        self.flows.passkey_auth_verify(&sid, &response, "ip")
    }
}

#[test]
fn registration_happy_path() {
    let h = harness();
    h.flows
        .request_registration_code("New@Example.com")
        .unwrap();
    assert_eq!(h.mail.count(), 1);
    let mail = h.mail.last_to("new@example.com").unwrap();
    assert!(mail.body.contains("30 seconds"));
    let temp = h
        .flows
        .store()
        .temp_registration("new@example.com")
        .unwrap();
    assert!(!temp.otp_verified);
    assert!(h
        .flows
        .store()
        .ttl_get("register:new@example.com")
        .is_some());

    let code = h.mail.last_code_for("new@example.com").unwrap();
    assert_eq!(code.len(), 6);
    h.flows
        .verify_registration_code("new@example.com", &code)
        .unwrap();
    assert!(h
        .flows
        .store()
        .ttl_get("register:new@example.com")
        .is_none());
    assert_eq!(
        h.flows.verify_registration_code("new@example.com", &code),
        Err(FlowError::CodeExpired)
    );
    let id = h
        .flows
        .set_password_and_promote("new@example.com", "long enough")
        .unwrap();
    assert!(h
        .flows
        .store()
        .temp_registration("new@example.com")
        .is_none());
    assert_eq!(
        h.flows.store().find_user(&id).unwrap().email,
        "new@example.com"
    );
    assert_eq!(
        h.flows.request_registration_code("new@example.com"),
        Err(FlowError::AlreadyRegistered)
    );
}

#[test]
fn registration_code_ttl_boundary() {
    let h = harness();
    h.flows.request_registration_code("a@example.com").unwrap();
    let code = h.mail.last_code_for("a@example.com").unwrap();
    h.clock.advance_secs(29);
    h.flows
        .verify_registration_code("a@example.com", &code)
        .unwrap();

    let h = harness();
    h.flows.request_registration_code("a@example.com").unwrap();
    let code = h.mail.last_code_for("a@example.com").unwrap();
    h.clock.advance_secs(31);
    assert_eq!(
        h.flows.verify_registration_code("a@example.com", &code),
        Err(FlowError::CodeExpired)
    );
}

#[test]
fn three_wrong_codes_invalidate() {
    let h = harness();
    h.flows.request_registration_code("a@example.com").unwrap();
    let code = h.mail.last_code_for("a@example.com").unwrap();
    let wrong = if code == "000000" { "111111" } else { "000000" };
    for _ in 0..3 {
        assert_eq!(
            h.flows.verify_registration_code("a@example.com", wrong),
            Err(FlowError::CodeMismatch)
        );
    }
    assert_eq!(
        h.flows.verify_registration_code("a@example.com", &code),
        Err(FlowError::CodeExpired)
    );
}

#[test]
fn brute_force_bound() {
    // every guess is charged; after max_code_attempts misses nothing is left to guess against
    let h = harness();
    let cfg = h.flows.config();
    let space = 10u64.pow(cfg.code_digits);
    let bound = f64::from(cfg.max_code_attempts) / space as f64;
    assert!(bound <= 3e-6);

    h.flows.request_registration_code("b@example.com").unwrap();
    let code: u32 = h
        .mail
        .last_code_for("b@example.com")
        .unwrap()
        .parse()
        .unwrap();
    let mut hits = 0;
    for guess in (0..space as u32).filter(|g| *g != code).take(10) {
        if h.flows
            .verify_registration_code("b@example.com", &format!("{guess:06}"))
            .is_ok()
        {
            hits += 1;
        }
    }
    assert_eq!(hits, 0);
    assert!(h.flows.store().ttl_get("register:b@example.com").is_none());
}

#[test]
fn code_request_rate_limit() {
    let h = harness();
    for _ in 0..3 {
        h.flows.request_registration_code("c@example.com").unwrap();
    }
    match h.flows.request_registration_code("c@example.com") {
        Err(FlowError::RateLimited { retry_after }) => {
            assert_eq!(retry_after, Duration::seconds(40))
        }
        other => panic!("expected RateLimited, got {other:?}"),
    }
    assert_eq!(h.mail.count(), 3);
    h.flows.request_registration_code("d@example.com").unwrap();
    h.clock.advance_secs(40);
    h.flows.request_registration_code("c@example.com").unwrap();
}

#[test]
fn registration_preconditions() {
    let h = harness();
    assert_eq!(
        h.flows.request_registration_code("nope"),
        Err(FlowError::InvalidEmail)
    );
    assert_eq!(
        h.flows.verify_registration_code("x@example.com", "123456"),
        Err(FlowError::NoPendingRegistration)
    );
    h.flows.request_registration_code("x@example.com").unwrap();
    assert_eq!(
        h.flows
            .set_password_and_promote("x@example.com", "long enough"),
        Err(FlowError::NotVerified)
    );
    let code = h.mail.last_code_for("x@example.com").unwrap();
    h.flows
        .verify_registration_code("x@example.com", &code)
        .unwrap();
    assert!(matches!(
        h.flows.set_password_and_promote("x@example.com", "short"),
        Err(FlowError::Password(PasswordError::PolicyViolation))
    ));
}

#[test]
fn password_and_code_login() {
    let h = harness();
    let id = h.register("u@example.com", "hunter2hunter2");
    let before = h.mail.count();
    assert_eq!(
        h.flows
            .login_password_step("u@example.com", "wrong-password", "ip"),
        Err(FlowError::InvalidCredentials)
    );
    assert_eq!(
        h.flows
            .login_password_step("ghost@example.com", "hunter2hunter2", "ip"),
        Err(FlowError::InvalidCredentials)
    );
    assert_eq!(h.mail.count(), before);

    let pending = h
        .flows
        .login_password_step("u@example.com", "hunter2hunter2", "ip")
        .unwrap();
    assert_eq!(pending.expires_in, Duration::seconds(300));
    let code = h.mail.last_code_for("u@example.com").unwrap();
    let token = h.flows.login_code_step("u@example.com", &code).unwrap();
    assert_eq!(h.flows.authenticate(token.as_str()).unwrap().subject, id);
    assert_eq!(
        h.flows.login_code_step("u@example.com", &code),
        Err(FlowError::CodeExpired)
    );
}

#[test]
fn login_code_is_bound_to_email() {
    let h = harness();
    h.register("u@example.com", "hunter2hunter2");
    h.register("v@example.com", "hunter2hunter2");
    h.flows
        .login_password_step("u@example.com", "hunter2hunter2", "ip")
        .unwrap();
    let u_code = h.mail.last_code_for("u@example.com").unwrap();
    h.flows
        .login_password_step("v@example.com", "hunter2hunter2", "ip")
        .unwrap();
    let v_code = h.mail.last_code_for("v@example.com").unwrap();
    if u_code != v_code {
        assert_eq!(
            h.flows.login_code_step("v@example.com", &u_code),
            Err(FlowError::CodeMismatch)
        );
    }
}

#[test]
fn login_rate_limit() {
    let h = harness();
    h.register("u@example.com", "hunter2hunter2");
    for _ in 0..10 {
        let _ = h
            .flows
            .login_password_step("u@example.com", "bad-password", "1.2.3.4");
    }
    assert!(matches!(
        h.flows
            .login_password_step("u@example.com", "hunter2hunter2", "1.2.3.4"),
        Err(FlowError::RateLimited { .. })
    ));
    h.flows
        .login_password_step("u@example.com", "hunter2hunter2", "5.6.7.8")
        .unwrap();
    h.clock.advance_secs(40);
    h.flows
        .login_password_step("u@example.com", "hunter2hunter2", "1.2.3.4")
        .unwrap();
}

fn oauth_round(h: &Harness, email: &str) -> Result<SignedToken, FlowError> {
    let start = h.flows.oauth_start();
    let redirect = h.oauth.authorize(&start.state, email);
    let url = url::Url::parse(&redirect).unwrap();
    let param = |k: &str| {
        url.query_pairs()
            .find(|(n, _)| n == k)
            .unwrap()
            .1
            .into_owned()
    };
    assert_eq!(param("state"), start.state);
    h.flows.oauth_callback(&param("code"), &param("state"))
}

#[test]
fn oauth_creates_then_reuses_user() {
    let h = harness();
    let t1 = oauth_round(&h, "o@example.com").unwrap();
    let c1 = h.flows.authenticate(t1.as_str()).unwrap();
    assert_eq!(h.flows.store().list_users().len(), 1);
    let t2 = oauth_round(&h, "o@example.com").unwrap();
    assert_eq!(
        h.flows.authenticate(t2.as_str()).unwrap().subject,
        c1.subject
    );
    assert_eq!(h.flows.store().list_users().len(), 1);
    let user = h.flows.store().find_user(&c1.subject).unwrap();
    assert_eq!(
        user.oauth_subject.unwrap(),
        MockProvider::subject_for("o@example.com")
    );
}

#[test]
fn oauth_links_existing_email_account() {
    let h = harness();
    let id = h.register("p@example.com", "hunter2hunter2");
    let token = oauth_round(&h, "p@example.com").unwrap();
    assert_eq!(h.flows.authenticate(token.as_str()).unwrap().subject, id);
}

#[test]
fn oauth_rejections() {
    let h = harness();
    let start = h.flows.oauth_start();
    let redirect = h.oauth.authorize(&start.state, "o@example.com");
    let url = url::Url::parse(&redirect).unwrap();
    let code = url
        .query_pairs()
        .find(|(k, _)| k == "code")
        .unwrap()
        .1
        .into_owned();
    assert_eq!(
        h.flows.oauth_callback(&code, "forged"),
        Err(FlowError::StateMismatch)
    );
    assert_eq!(
        h.flows.oauth_callback(&code, ""),
        Err(FlowError::StateMismatch)
    );
    h.flows.oauth_callback(&code, &start.state).unwrap();

    let again = h.flows.oauth_start();
    assert!(matches!(
        h.flows.oauth_callback(&code, &again.state),
        Err(FlowError::CodeExchangeFailed(_))
    ));
    assert_eq!(
        h.flows.oauth_callback(&code, &start.state),
        Err(FlowError::StateMismatch)
    );

    let late = h.flows.oauth_start();
    h.clock.advance_secs(601);
    assert_eq!(
        h.flows.oauth_callback("x", &late.state),
        Err(FlowError::StateMismatch)
    );
}

#[test]
fn passkey_register_list_login_delete() {
    let h = harness();
    let id = h.register("k@example.com", "hunter2hunter2");
    let mut phone = EmulatedAuthenticator::seeded(1);
    let mut laptop = EmulatedAuthenticator::seeded(2);
    let phone_id = h.add_passkey(&id, &mut phone, "  phone  ");
    h.add_passkey(&id, &mut laptop, "");
    let list = h.flows.list_passkeys(&id);
    assert_eq!(list.len(), 2);
    let mut names: Vec<_> = list.iter().map(|p| p.device_name.as_str()).collect();
    names.sort();
    assert_eq!(names, ["Passkey", "phone"]);

    let token = h.passkey_login(&mut phone).unwrap();
    assert_eq!(h.flows.authenticate(token.as_str()).unwrap().subject, id);
    assert_eq!(h.flows.store().credential(&phone_id).unwrap().counter, 1);
    h.passkey_login(&mut phone).unwrap();
    assert_eq!(h.flows.store().credential(&phone_id).unwrap().counter, 2);

    h.flows.delete_passkey(&id, &phone_id).unwrap();
    assert_eq!(
        h.passkey_login(&mut phone),
        Err(FlowError::Authentication(WebAuthnError::UnknownCredential))
    );
    assert_eq!(
        h.flows.delete_passkey(&id, &phone_id),
        Err(FlowError::NotFound)
    );
}

#[test]
fn passkey_ownership() {
    let h = harness();
    let alice = h.register("alice@example.com", "hunter2hunter2");
    let bob = h.register("bob@example.com", "hunter2hunter2");
    let mut key = EmulatedAuthenticator::seeded(3);
    let cred = h.add_passkey(&alice, &mut key, "yubi");
    assert_eq!(
        h.flows.delete_passkey(&bob, &cred),
        Err(FlowError::Forbidden)
    );
    assert!(h.flows.list_passkeys(&bob).is_empty());

    let (sid, options) = h.flows.passkey_register_options(&alice).unwrap();
    let response = EmulatedAuthenticator::seeded(4)
        .emulate_create(&options, ORIGIN)
        .unwrap();
    assert_eq!(
        h.flows
            .passkey_register_verify(&bob, &sid, &response, "x", "ip"),
        Err(FlowError::Forbidden)
    );
}

#[test]
fn passkey_session_errors() {
    let h = harness();
    let id = h.register("s@example.com", "hunter2hunter2");
    let mut key = EmulatedAuthenticator::seeded(5);
    let (sid, options) = h.flows.passkey_register_options(&id).unwrap();
    let response = key.emulate_create(&options, ORIGIN).unwrap();
    assert_eq!(
        h.flows
            .passkey_register_verify(&id, "unknown", &response, "x", "ip"),
        Err(FlowError::SessionNotFound)
    );
    h.flows
        .passkey_register_verify(&id, &sid, &response, "x", "ip")
        .unwrap();
    assert_eq!(
        h.flows
            .passkey_register_verify(&id, &sid, &response, "x", "ip"),
        Err(FlowError::Registration(WebAuthnError::SessionAlreadyUsed))
    );

    let (sid, options) = h.flows.passkey_auth_options(None).unwrap();
    let response = key.emulate_get_any(&options, ORIGIN).unwrap();
    h.clock.advance_secs(301);
    assert_eq!(
        h.flows.passkey_auth_verify(&sid, &response, "ip"),
        Err(FlowError::Authentication(WebAuthnError::SessionExpired))
    );
}

#[test]
fn passkey_replay_and_counter_regression() {
    let h = harness();
    let id = h.register("r@example.com", "hunter2hunter2");
    let mut key = EmulatedAuthenticator::seeded(6);
    let cred = h.add_passkey(&id, &mut key, "key");

    let (sid, options) = h.flows.passkey_auth_options(Some("r@example.com")).unwrap();
    assert_eq!(options.allow_credentials.len(), 1);
    let response = key.emulate_get(&options, ORIGIN, &cred).unwrap();
    h.flows.passkey_auth_verify(&sid, &response, "ip").unwrap();
    assert_eq!(
        h.flows.passkey_auth_verify(&sid, &response, "ip"),
        Err(FlowError::Authentication(WebAuthnError::SessionAlreadyUsed))
    );

    key.set_tamper(Some(Tamper::FrozenCounter));
    let (sid, options) = h.flows.passkey_auth_options(None).unwrap();
    let frozen = key.emulate_get(&options, ORIGIN, &cred).unwrap();
    assert_eq!(
        h.flows.passkey_auth_verify(&sid, &frozen, "ip"),
        Err(FlowError::Authentication(
            WebAuthnError::CounterRegression {
                stored: 1,
                received: 1
            }
        ))
    );
    assert_eq!(h.flows.store().credential(&cred).unwrap().counter, 1);
}

#[test]
fn passkey_options_scope_to_email() {
    let h = harness();
    let id = h.register("e@example.com", "hunter2hunter2");
    let other = h.register("f@example.com", "hunter2hunter2");
    let mut mine = EmulatedAuthenticator::seeded(7);
    let mut theirs = EmulatedAuthenticator::seeded(8);
    h.add_passkey(&id, &mut mine, "a");
    let other_cred = h.add_passkey(&other, &mut theirs, "b");

    let (sid, _) = h.flows.passkey_auth_options(Some("e@example.com")).unwrap();
    let (_, open) = h.flows.passkey_auth_options(None).unwrap();
    let response = theirs.emulate_get(&open, ORIGIN, &other_cred).unwrap();
    // signed over the wrong challenge too, but the user binding fails first
    assert_eq!(
        h.flows.passkey_auth_verify(&sid, &response, "ip"),
        Err(FlowError::Authentication(WebAuthnError::UnknownCredential))
    );
    let (_, unknown) = h
        .flows
        .passkey_auth_options(Some("nobody@example.com"))
        .unwrap();
    assert!(unknown.allow_credentials.is_empty());
}

#[test]
fn passkey_verify_rate_limit() {
    let h = harness();
    let (sid, options) = h.flows.passkey_auth_options(None).unwrap();
    let mut key = EmulatedAuthenticator::seeded(9);
    let id = h.register("z@example.com", "hunter2hunter2");
    h.add_passkey(&id, &mut key, "k");
    let response = key.emulate_get_any(&options, ORIGIN).unwrap();
    // add_passkey spent one attempt from "ip"
    for _ in 0..19 {
        let _ = h.flows.passkey_auth_verify("missing", &response, "ip");
    }
    assert!(matches!(
        h.flows.passkey_auth_verify(&sid, &response, "ip"),
        Err(FlowError::RateLimited { .. })
    ));
}

#[test]
fn logout_revokes() {
    let h = harness();
    h.register("l@example.com", "hunter2hunter2");
    h.flows
        .login_password_step("l@example.com", "hunter2hunter2", "ip")
        .unwrap();
    let code = h.mail.last_code_for("l@example.com").unwrap();
    let token = h.flows.login_code_step("l@example.com", &code).unwrap();
    h.flows.logout(token.as_str()).unwrap();
    assert_eq!(
        h.flows.authenticate(token.as_str()),
        Err(FlowError::Token(TokenError::Revoked))
    );
}

#[test]
fn totp_enroll_verify_and_replay_guard() {
    let h = harness();
    let id = h.register("t@example.com", "hunter2hunter2");
    let (secret, uri) = h.flows.enroll_totp(&id).unwrap();
    assert!(uri.starts_with("otpauth://totp/PassGate:t%40example.com?"));
    let now = h.clock.unix() as u64;
    let code = otp::totp_at(&secret, now, otp::DEFAULT_STEP, 6).unwrap();
    h.flows.verify_user_totp(&id, code.as_str()).unwrap();
    assert_eq!(
        h.flows.verify_user_totp(&id, code.as_str()),
        Err(FlowError::CodeExpired)
    );
    h.clock.advance_secs(30);
    let next = otp::totp_at(&secret, now + 30, otp::DEFAULT_STEP, 6).unwrap();
    h.flows.verify_user_totp(&id, next.as_str()).unwrap();
    h.clock.advance_secs(120);
    assert_eq!(
        h.flows.verify_user_totp(&id, code.as_str()),
        Err(FlowError::CodeMismatch)
    );
}

/// Drives every failing path and checks none of them produces a token.
#[test]
fn no_token_escapes() {
    let h = harness();
    let id = h.register("n@example.com", "hunter2hunter2");
    let mut key = EmulatedAuthenticator::seeded(10);
    h.add_passkey(&id, &mut key, "k");
    h.passkey_login(&mut key).unwrap();
    let mut results: Vec<(&str, Result<SignedToken, FlowError>)> = Vec::new();

    h.flows
        .login_password_step("n@example.com", "hunter2hunter2", "ip2")
        .unwrap();
    let code = h.mail.last_code_for("n@example.com").unwrap();
    let wrong = if code == "999999" { "000000" } else { "999999" };
    results.push((
        "wrong login code",
        h.flows.login_code_step("n@example.com", wrong),
    ));
    results.push((
        "code for other email",
        h.flows.login_code_step("m@example.com", &code),
    ));
    results.push((
        "no pending login",
        h.flows.login_code_step("q@example.com", "123456"),
    ));
    h.clock.advance_secs(301);
    results.push((
        "expired login code",
        h.flows.login_code_step("n@example.com", &code),
    ));

    results.push(("forged oauth state", h.flows.oauth_callback("c", "s")));
    let start = h.flows.oauth_start();
    results.push((
        "bad oauth code",
        h.flows.oauth_callback("bogus", &start.state),
    ));

    // frozen_counter first: the other knobs still advance the emulator's counter
    let mut knobs = Tamper::ALL.to_vec();
    knobs.sort_by_key(|k| *k != Tamper::FrozenCounter);
    for knob in knobs {
        key.set_tamper(Some(knob));
        let (sid, options) = h.flows.passkey_auth_options(None).unwrap();
        let response = key.emulate_get_any(&options, ORIGIN).unwrap();
        let label = knob.as_str();
        results.push((
            label,
            h.flows
                .passkey_auth_verify(&sid, &response, &format!("ip-{label}")),
        ));
    }
    key.set_tamper(None);
    let (sid, options) = h.flows.passkey_auth_options(None).unwrap();
    let mut response = key.emulate_get_any(&options, ORIGIN).unwrap();
    response.response.user_handle = Some(b"someone else".to_vec());
    results.push((
        "user handle",
        h.flows.passkey_auth_verify(&sid, &response, "ip-h"),
    ));

    for (label, result) in results {
        assert!(result.is_err(), "{label} produced a token");
    }
}

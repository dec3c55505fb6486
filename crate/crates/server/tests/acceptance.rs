//! One line per acceptance criterion. Exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::time::{Duration as StdDuration, Instant};

use chrono::Duration;
use common::{start, Reply, TestServer};
use passgate::emulator::{encode_cbor, EmulatedAuthenticator, Tamper};
use passgate::otp::{hotp, totp_at, OtpSecret};
use passgate::password::{hash_password, verify_encoded, verify_password, PasswordError};
use passgate::storage::{Store, UserId};
use passgate::tokens::{TokenError, TokenService};
use passgate::webauthn::{decode_cbor, AuthenticationOptions, CborError, CborValue};
use passgate::{Clock, ManualClock};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use reqwest::Url;
use serde_json::json;

type Check = fn() -> Pin<Box<dyn Future<Output = ()> + Send>>;

macro_rules! criteria {
    ($($name:ident),* $(,)?) => {
        [$((stringify!($name), (|| Box::pin($name()) as Pin<Box<dyn Future<Output = ()> + Send>>) as Check)),*]
    };
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let all = criteria![
        otp_conformance,
        passkey_happy_path,
        tamper_matrix,
        replay,
        revocation_soundness,
        code_ttl,
        rate_limiting,
        oauth_mock_roundtrip,
        password_hashing,
        cbor_decoder,
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in all {
        let started = Instant::now();
        let outcome = rt.block_on(rt.spawn(check()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {name} ({secs:.2}s)"),
            Err(e) => {
                failed += 1;
                let reason = e
                    .try_into_panic()
                    .ok()
                    .and_then(|p| {
                        p.downcast_ref::<String>()
                            .cloned()
                            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    })
                    .unwrap_or_else(|| "cancelled".into());
                println!("FAIL {name} ({secs:.2}s): {reason}");
            }
        }
    }
    println!("{} of {} criteria passed", all.len() - failed, all.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn no_token(r: &Reply) {
    assert!(r.token().is_none(), "token issued: {}", r.body);
}

async fn otp_conformance() {
    let started = Instant::now();
    let secret = OtpSecret::from_bytes(b"12345678901234567890".to_vec());
    let hotp_vectors = [
        "755224", "287082", "359152", "969429", "338314", "254676", "287922", "162583", "399871",
        "520489",
    ];
    for (counter, want) in hotp_vectors.iter().enumerate() {
        assert_eq!(
            hotp(&secret, counter as u64, 6).unwrap().as_str(),
            *want,
            "hotp {counter}"
        );
    }
    let totp_vectors = [
        (59, "94287082"),
        (1_111_111_109, "07081804"),
        (1_111_111_111, "14050471"),
        (1_234_567_890, "89005924"),
        (2_000_000_000, "69279037"),
        (20_000_000_000, "65353130"),
    ];
    for (t, want) in totp_vectors {
        assert_eq!(
            totp_at(&secret, t, 30, 8).unwrap().as_str(),
            want,
            "totp {t}"
        );
    }
    assert!(
        started.elapsed() < StdDuration::from_secs(1),
        "took {:?}",
        started.elapsed()
    );
}

async fn stored_counter(s: &TestServer, token: &str, id: &str) -> u64 {
    let list = s.get("/auth/passkey/list", Some(token)).await;
    list.body["passkeys"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["id"] == id)
        .unwrap_or_else(|| panic!("passkey {id} not listed"))["counter"]
        .as_u64()
        .unwrap()
}

async fn passkey_happy_path() {
    let started = Instant::now();
    let s = start(|_| {}).await;
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for i in 0..100 {
        // stay clear of the per-window passkey limit
        s.clock.advance(Duration::seconds(61));
        let token = s
            .oauth(&format!("user{i}@example.com"))
            .await
            .token()
            .unwrap();
        let mut key = EmulatedAuthenticator::seeded(rng.gen());
        let reg = s
            .register_passkey(&token, &mut key, &format!("key {i}"))
            .await;
        assert_eq!(reg.status, 200, "ceremony {i}: {}", reg.body);
        let id = reg.body["passkey"]["id"].as_str().unwrap().to_owned();
        let mut last = stored_counter(&s, &token, &id).await;
        for _ in 0..rng.gen_range(1..=3) {
            let login = s.passkey_login(&mut key).await;
            assert_eq!(login.status, 200, "ceremony {i}: {}", login.body);
            let me = s.get("/me", login.token().as_deref()).await;
            assert_eq!(me.body["email"], format!("user{i}@example.com"));
            let now = stored_counter(&s, &token, &id).await;
            assert!(now > last, "ceremony {i}: counter {last} -> {now}");
            last = now;
        }
    }
    s.stop().await;
    assert!(
        started.elapsed() < StdDuration::from_secs(30),
        "took {:?}",
        started.elapsed()
    );
}

fn expected_code(knob: Tamper, registration: bool) -> &'static str {
    match knob {
        Tamper::WrongOrigin => "origin_mismatch",
        Tamper::WrongType => "type_mismatch",
        Tamper::StaleChallenge => "challenge_mismatch",
        Tamper::FrozenCounter if registration => "credential_already_registered",
        Tamper::FrozenCounter => "counter_regression",
        Tamper::BadSignature => "bad_signature",
        Tamper::WrongRpHash => "rp_id_hash_mismatch",
    }
}

async fn tamper_matrix() {
    let s = start(|_| {}).await;
    let mut false_accepts = Vec::new();
    for (n, knob) in Tamper::ALL.into_iter().enumerate() {
        s.clock.advance(Duration::seconds(61));
        let token = s
            .oauth(&format!("reg{n}@example.com"))
            .await
            .token()
            .unwrap();
        let mut key = EmulatedAuthenticator::seeded(n as u64);
        assert_eq!(
            s.register_passkey(&token, &mut key, "honest").await.status,
            200
        );
        key.set_tamper(Some(knob));
        let r = s.register_passkey(&token, &mut key, "tampered").await;
        if r.status.is_success() {
            false_accepts.push(format!("register/{knob}"));
        }
        assert_eq!(
            (r.status.as_u16(), r.code()),
            (400, expected_code(knob, true)),
            "register/{knob}"
        );
        no_token(&r);
        let listed = s.get("/auth/passkey/list", Some(&token)).await;
        assert_eq!(
            listed.body["passkeys"].as_array().unwrap().len(),
            1,
            "register/{knob}"
        );

        s.clock.advance(Duration::seconds(61));
        let token = s
            .oauth(&format!("auth{n}@example.com"))
            .await
            .token()
            .unwrap();
        let mut key = EmulatedAuthenticator::seeded(100 + n as u64);
        let id = s.register_passkey(&token, &mut key, "honest").await.body["passkey"]["id"]
            .as_str()
            .unwrap()
            .to_owned();
        assert_eq!(s.passkey_login(&mut key).await.status, 200);
        key.set_tamper(Some(knob));
        let r = s.passkey_login(&mut key).await;
        if r.status.is_success() {
            false_accepts.push(format!("authenticate/{knob}"));
        }
        assert_eq!(
            (r.status.as_u16(), r.code()),
            (401, expected_code(knob, false)),
            "authenticate/{knob}"
        );
        no_token(&r);
        assert_eq!(
            stored_counter(&s, &token, &id).await,
            1,
            "authenticate/{knob}"
        );
    }
    assert!(false_accepts.is_empty(), "false accepts: {false_accepts:?}");
    s.stop().await;
}

async fn replay() {
    let s = start(|_| {}).await;
    let token = s.oauth("replay@example.com").await.token().unwrap();
    let mut key = EmulatedAuthenticator::seeded(77);
    assert_eq!(s.register_passkey(&token, &mut key, "k").await.status, 200);

    let (sid, options): (String, AuthenticationOptions) = s.auth_options(None).await;
    let response = key.emulate_get_any(&options, &s.origin).unwrap();
    let body = json!({ "sessionId": sid, "response": response });
    let first = s
        .post("/auth/passkey/auth-verify", None, body.clone())
        .await;
    assert_eq!(first.status, 200, "{}", first.body);
    let again = s.post("/auth/passkey/auth-verify", None, body).await;
    assert_eq!(
        (again.status.as_u16(), again.code()),
        (401, "session_already_used")
    );
    no_token(&again);

    // fresh challenge, re-signed with the counter of the accepted assertion
    key.set_tamper(Some(Tamper::FrozenCounter));
    let resigned = s.passkey_login(&mut key).await;
    assert_eq!(
        (resigned.status.as_u16(), resigned.code()),
        (401, "counter_regression")
    );
    no_token(&resigned);
    s.stop().await;
}

async fn revocation_soundness() {
    const SECRET: &[u8] = b"acceptance-revocation-secret-0123456789";
    let mut rng = StdRng::seed_from_u64(0xdead_beef);
    for round in 0..300 {
        let clock = ManualClock::at_unix(1_700_000_000);
        let store = Arc::new(Store::in_memory(Arc::new(clock.clone())));
        let svc = TokenService::new(SECRET, Duration::hours(1), store.clone()).unwrap();
        // token, issued at, revoked at
        let mut issued: Vec<(String, i64, Option<i64>)> = Vec::new();
        for _ in 0..60 {
            match rng.gen_range(0..10) {
                0..=1 => {
                    let t = svc.issue(UserId::random(), "r@example.com");
                    issued.push((t.as_str().to_owned(), clock.unix(), None));
                }
                2..=5 if !issued.is_empty() => {
                    let i = rng.gen_range(0..issued.len());
                    let (token, iat, revoked) = &issued[i];
                    let got = svc.verify(token);
                    if clock.unix() >= iat + 3600 {
                        assert_eq!(got, Err(TokenError::Expired), "round {round}");
                    } else if revoked.is_some() {
                        assert_eq!(got, Err(TokenError::Revoked), "round {round}");
                    } else {
                        assert!(got.is_ok(), "round {round}: {got:?}");
                    }
                }
                6..=7 if !issued.is_empty() => {
                    let i = rng.gen_range(0..issued.len());
                    let (token, _, revoked) = &mut issued[i];
                    let result = svc.revoke(token);
                    assert!(result.is_ok(), "round {round}: {result:?}");
                    let now = clock.unix();
                    // a lapsed entry is recreated, a live one is kept
                    if revoked.is_none_or(|at| now >= at + 3600) {
                        *revoked = Some(now);
                    }
                }
                _ => clock.advance(Duration::seconds(rng.gen_range(1..900))),
            }
        }
        for (token, _, revoked) in &issued {
            if let Some(at) = revoked {
                let alive = clock.unix() < at + 3600;
                assert_eq!(store.blacklist_contains(token), alive, "round {round}");
            }
        }
        clock.advance(Duration::seconds(3601));
        for (token, _, _) in &issued {
            assert!(
                !store.blacklist_contains(token),
                "round {round}: entry outlived 1 h"
            );
        }
    }
}

async fn request_code(s: &TestServer, email: &str) -> String {
    let r = s
        .post("/auth/register/code", None, json!({ "email": email }))
        .await;
    assert_eq!(r.status, 200, "{}", r.body);
    s.mail.last_code_for(email).unwrap()
}

async fn verify_code(s: &TestServer, email: &str, code: &str) -> Reply {
    s.post(
        "/auth/register/verify",
        None,
        json!({ "email": email, "code": code }),
    )
    .await
}

async fn code_ttl() {
    let s = start(|_| {}).await;
    let code = request_code(&s, "early@example.com").await;
    s.clock.advance(Duration::seconds(29));
    assert_eq!(
        verify_code(&s, "early@example.com", &code).await.status,
        200
    );
    let reused = verify_code(&s, "early@example.com", &code).await;
    assert_eq!(reused.status, 400, "code reused: {}", reused.body);

    let code = request_code(&s, "late@example.com").await;
    s.clock.advance(Duration::seconds(31));
    let late = verify_code(&s, "late@example.com", &code).await;
    assert_eq!((late.status.as_u16(), late.code()), (400, "code_expired"));

    let code = request_code(&s, "guess@example.com").await;
    let wrong = if code == "000000" { "111111" } else { "000000" };
    for _ in 0..3 {
        let r = verify_code(&s, "guess@example.com", wrong).await;
        assert_eq!(r.code(), "code_mismatch");
    }
    let after = verify_code(&s, "guess@example.com", &code).await;
    assert_eq!(after.status, 400, "code survived 3 misses: {}", after.body);
    let promoted = s
        .post(
            "/auth/register/password",
            None,
            json!({ "email": "guess@example.com", "password": "a strong password" }),
        )
        .await;
    assert_eq!(promoted.code(), "not_verified");
}

async fn rate_limiting() {
    let s = start(|a| a.login_limit = 10).await;
    let attempt = || {
        s.post(
            "/auth/login",
            None,
            json!({ "email": "x@example.com", "password": "not the password" }),
        )
    };
    for i in 0..10 {
        let r = attempt().await;
        assert_eq!(r.status, 401, "request {}", i + 1);
    }
    let limited = attempt().await;
    assert_eq!(
        (limited.status.as_u16(), limited.code()),
        (429, "rate_limited")
    );
    let retry: u64 = limited.headers["retry-after"]
        .to_str()
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(retry, 40);
    s.clock.advance(Duration::seconds(retry as i64));
    assert_eq!(
        attempt().await.status,
        401,
        "service not restored after rollover"
    );
    s.stop().await;
}

async fn oauth_mock_roundtrip() {
    let s = start(|_| {}).await;
    let begin = s.get("/auth/oauth/google", None).await;
    assert_eq!(begin.status, 302);
    let mut authorize = Url::parse(begin.headers["location"].to_str().unwrap()).unwrap();
    authorize
        .query_pairs_mut()
        .append_pair("login_hint", "oauth@example.com");
    let approved = s.location(authorize.as_str()).await;
    assert_eq!(approved.status, 302);
    let callback = Url::parse(approved.headers["location"].to_str().unwrap()).unwrap();

    let mut forged = callback.clone();
    let pairs: Vec<(String, String)> = callback
        .query_pairs()
        .map(|(k, v)| {
            let v = if k == "state" {
                format!("{v}x")
            } else {
                v.into_owned()
            };
            (k.into_owned(), v)
        })
        .collect();
    forged.query_pairs_mut().clear().extend_pairs(pairs);
    let r = s.location(forged.as_str()).await;
    assert_eq!((r.status.as_u16(), r.code()), (400, "state_mismatch"));
    no_token(&r);

    let ok = s.location(callback.as_str()).await;
    assert_eq!(ok.status, 200, "{}", ok.body);
    let me = s.get("/me", ok.token().as_deref()).await;
    assert_eq!(
        (me.status.as_u16(), me.body["email"].as_str()),
        (200, Some("oauth@example.com"))
    );

    let replayed = s.location(callback.as_str()).await;
    assert!(replayed.status.is_client_error(), "{}", replayed.body);
    no_token(&replayed);
    s.stop().await;
}

async fn password_hashing() {
    tokio::task::spawn_blocking(|| {
        let mut rng = StdRng::seed_from_u64(10);
        let passwords: Vec<String> = (0..200)
            .map(|_| {
                let len = rng.gen_range(8..=72);
                (0..len).map(|_| rng.gen_range(' '..='~')).collect()
            })
            .collect();
        let salts: Vec<String> = std::thread::scope(|scope| {
            let workers: Vec<_> = passwords
                .chunks(50)
                .map(|chunk| {
                    scope.spawn(move || {
                        chunk
                            .iter()
                            .map(|pw| {
                                let h = hash_password(pw, 10).unwrap();
                                assert!(h.as_str().starts_with("$2b$10$"));
                                assert!(verify_password(pw, &h), "roundtrip failed");
                                h.as_str()[7..29].to_owned()
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            workers
                .into_iter()
                .flat_map(|w| w.join().unwrap())
                .collect()
        });
        assert_eq!(
            salts.iter().collect::<HashSet<_>>().len(),
            200,
            "salt reused"
        );
        let a = hash_password("same password", 10).unwrap();
        let b = hash_password("same password", 10).unwrap();
        assert_ne!(a.as_str(), b.as_str());

        const ALPHABET: &[u8] =
            b"./ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789$";
        let check = |pw: &str, text: String, pos: usize| match verify_encoded(pw, &text) {
            Ok(false) | Err(PasswordError::FormatError(_)) => {}
            other => panic!("mutation at byte {pos} accepted: {other:?}"),
        };
        let original = a.as_str().as_bytes().to_vec();
        for pos in 0..original.len() {
            let mut mutated = original.clone();
            while mutated[pos] == original[pos] {
                mutated[pos] = ALPHABET[rng.gen_range(0..ALPHABET.len())];
            }
            check("same password", String::from_utf8(mutated).unwrap(), pos);
        }
        let cheap = hash_password("same password", 4).unwrap();
        let original = cheap.as_str().as_bytes().to_vec();
        for pos in 0..original.len() {
            for &byte in ALPHABET.iter().filter(|b| **b != original[pos]) {
                let mut mutated = original.clone();
                mutated[pos] = byte;
                check("same password", String::from_utf8(mutated).unwrap(), pos);
            }
        }
    })
    .await
    .unwrap_or_else(|e| std::panic::resume_unwind(e.into_panic()));
}

fn random_value(rng: &mut StdRng, depth: u32) -> CborValue {
    let pick = if depth >= 4 {
        rng.gen_range(0..6)
    } else {
        rng.gen_range(0..8)
    };
    match pick {
        0 => CborValue::Unsigned(match rng.gen_range(0..4) {
            0 => rng.gen_range(0..24),
            1 => rng.gen_range(24..=u16::MAX as u64),
            2 => rng.gen_range(0..=u32::MAX as u64),
            _ => rng.gen(),
        }),
        1 => CborValue::Negative(rng.gen()),
        2 => CborValue::Bytes((0..rng.gen_range(0..40)).map(|_| rng.gen()).collect()),
        3 => CborValue::Text(
            (0..rng.gen_range(0..20))
                .map(|_| rng.gen::<char>())
                .collect(),
        ),
        4 => CborValue::Bool(rng.gen()),
        5 => CborValue::Null,
        6 => CborValue::Array(
            (0..rng.gen_range(0..6))
                .map(|_| random_value(rng, depth + 1))
                .collect(),
        ),
        _ => {
            let mut seen = BTreeSet::new();
            let mut entries = Vec::new();
            for _ in 0..rng.gen_range(0..6) {
                let k = random_value(rng, depth + 1);
                if seen.insert(encode_cbor(&k)) {
                    entries.push((k, random_value(rng, depth + 1)));
                }
            }
            CborValue::Map(entries)
        }
    }
}

async fn cbor_decoder() {
    let mut rng = StdRng::seed_from_u64(1000);
    for i in 0..1000 {
        let v = random_value(&mut rng, 0);
        let bytes = encode_cbor(&v);
        assert_eq!(decode_cbor(&bytes).as_ref(), Ok(&v), "value {i}");
        for cut in 0..bytes.len() {
            assert!(
                decode_cbor(&bytes[..cut]).is_err(),
                "value {i}: prefix {cut} accepted"
            );
        }
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert_eq!(
            decode_cbor(&trailing),
            Err(CborError::TrailingBytes(1)),
            "value {i}"
        );
    }
    let malformed: &[(&[u8], CborError)] = &[
        (&[], CborError::Empty),
        (&[0x18], CborError::Truncated),
        (&[0x43, 0xaa, 0xbb], CborError::Truncated),
        (&[0x82, 0x01], CborError::Truncated),
        (&[0x5f], CborError::IndefiniteLengthUnsupported),
        (&[0x7f], CborError::IndefiniteLengthUnsupported),
        (&[0x9f, 0x01, 0xff], CborError::IndefiniteLengthUnsupported),
        (
            &[0xbf, 0x01, 0x01, 0xff],
            CborError::IndefiniteLengthUnsupported,
        ),
        (&[0xa2, 0x01, 0x01, 0x01, 0x02], CborError::DuplicateMapKey),
        (
            &[0xa2, 0x61, 0x61, 0x01, 0x61, 0x61, 0x02],
            CborError::DuplicateMapKey,
        ),
        (
            &[0x5b, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff],
            CborError::Truncated,
        ),
    ];
    for (input, err) in malformed {
        assert_eq!(decode_cbor(input).as_ref(), Err(err), "{input:02x?}");
    }
}

#![allow(dead_code)]

use std::sync::Arc;

use passgate::emulator::EmulatedAuthenticator;
use passgate::flows::CaptureMailer;
use passgate::webauthn::{AuthenticationOptions, RegistrationOptions};
use passgate::ManualClock;
use passgate_server::config::{MailerKind, ServeArgs};
use passgate_server::server::{spawn, Running};
use passgate_server::AppState;
use reqwest::{redirect, Client, StatusCode, Url};
use serde_json::{json, Value};

pub const JWT_SECRET: &str = "http-test-secret-0123456789abcdef0123";

pub struct TestServer {
    pub base: String,
    pub origin: String,
    pub clock: ManualClock,
    pub mail: Arc<CaptureMailer>,
    pub state: Arc<AppState>,
    pub http: Client,
    running: Option<Running>,
}

/// Starts a server on a free port with a manual clock and a capture mailer.
pub async fn start(tweak: impl FnOnce(&mut ServeArgs)) -> TestServer {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let port = listener.local_addr().unwrap().port();
    let origin = format!("http://localhost:{port}");
    let mut args = ServeArgs {
        port,
        origin: origin.clone(),
        jwt_secret: Some(JWT_SECRET.into()),
        mailer: MailerKind::Capture,
        bcrypt_cost: 4,
        ..ServeArgs::default()
    };
    tweak(&mut args);
    // 20 s into a fixed window
    let clock = ManualClock::at_unix(1_700_000_000);
    let built = args.build(port, Arc::new(clock.clone())).unwrap();
    let running = spawn(listener, built.state.clone());
    TestServer {
        base: running.base_url(),
        origin: args.origin.clone(),
        clock,
        mail: built.capture.expect("capture mailer"),
        state: built.state,
        http: Client::builder()
            .redirect(redirect::Policy::none())
            .build()
            .unwrap(),
        running: Some(running),
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: reqwest::header::HeaderMap,
    pub body: Value,
}

impl Reply {
    pub fn code(&self) -> &str {
        self.body["code"].as_str().unwrap_or("")
    }

    pub fn token(&self) -> Option<String> {
        self.body["token"].as_str().map(str::to_owned)
    }
}

impl TestServer {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn send(&self, req: reqwest::RequestBuilder) -> Reply {
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let text = resp.text().await.unwrap();
        let body = if text.is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Value::String(text))
        };
        Reply {
            status,
            headers,
            body,
        }
    }

    pub async fn post(&self, path: &str, token: Option<&str>, body: Value) -> Reply {
        let mut req = self.http.post(self.url(path)).json(&body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        self.send(req).await
    }

    pub async fn get(&self, path: &str, token: Option<&str>) -> Reply {
        let mut req = self.http.get(self.url(path));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        self.send(req).await
    }

    /// Email-code registration through the three HTTP endpoints.
    pub async fn register(&self, email: &str, password: &str) -> Reply {
        let r = self
            .post("/auth/register/code", None, json!({ "email": email }))
            .await;
        assert_eq!(r.status, 200, "{:?}", r.body);
        let code = self.mail.last_code_for(email).unwrap();
        let r = self
            .post(
                "/auth/register/verify",
                None,
                json!({ "email": email, "code": code }),
            )
            .await;
        assert_eq!(r.status, 200, "{:?}", r.body);
        self.post(
            "/auth/register/password",
            None,
            json!({ "email": email, "password": password }),
        )
        .await
    }

    /// Password + emailed code login.
    pub async fn login(&self, email: &str, password: &str) -> String {
        let r = self
            .post(
                "/auth/login",
                None,
                json!({ "email": email, "password": password }),
            )
            .await;
        assert_eq!(r.status, 200, "{:?}", r.body);
        let code = self.mail.last_code_for(email).unwrap();
        let r = self
            .post(
                "/auth/login/verify",
                None,
                json!({ "email": email, "code": code }),
            )
            .await;
        assert_eq!(r.status, 200, "{:?}", r.body);
        r.token().unwrap()
    }

    pub async fn location(&self, url: &str) -> Reply {
        self.send(self.http.get(url)).await
    }

    /// start → mock authorize → callback; returns the callback reply.
    pub async fn oauth(&self, email: &str) -> Reply {
        let start = self.get("/auth/oauth/google", None).await;
        assert_eq!(start.status, 302);
        let mut authorize = Url::parse(start.headers["location"].to_str().unwrap()).unwrap();
        authorize.query_pairs_mut().append_pair("login_hint", email);
        let approved = self.location(authorize.as_str()).await;
        assert_eq!(approved.status, 302, "{:?}", approved.body);
        let callback = approved.headers["location"].to_str().unwrap().to_owned();
        self.location(&callback).await
    }

    pub async fn register_passkey(
        &self,
        token: &str,
        auth: &mut EmulatedAuthenticator,
        name: &str,
    ) -> Reply {
        let r = self
            .post("/auth/passkey/register-options", Some(token), json!({}))
            .await;
        assert_eq!(r.status, 200, "{:?}", r.body);
        let options: RegistrationOptions =
            serde_json::from_value(r.body["options"].clone()).unwrap();
        let response = auth.emulate_create(&options, &self.origin).unwrap();
        self.post(
            "/auth/passkey/register-verify",
            Some(token),
            json!({ "sessionId": r.body["sessionId"], "response": response, "deviceName": name }),
        )
        .await
    }

    pub async fn auth_options(&self, email: Option<&str>) -> (String, AuthenticationOptions) {
        let body = match email {
            Some(e) => json!({ "email": e }),
            None => json!({}),
        };
        let r = self.post("/auth/passkey/auth-options", None, body).await;
        assert_eq!(r.status, 200, "{:?}", r.body);
        let options = serde_json::from_value(r.body["options"].clone()).unwrap();
        (r.body["sessionId"].as_str().unwrap().to_owned(), options)
    }

    pub async fn passkey_login(&self, auth: &mut EmulatedAuthenticator) -> Reply {
        let (sid, options) = self.auth_options(None).await;
        let response = auth.emulate_get_any(&options, &self.origin).unwrap();
        self.post(
            "/auth/passkey/auth-verify",
            None,
            json!({ "sessionId": sid, "response": response }),
        )
        .await
    }

    pub async fn stop(mut self) {
        if let Some(r) = self.running.take() {
            r.shutdown().await.unwrap();
        }
    }
}

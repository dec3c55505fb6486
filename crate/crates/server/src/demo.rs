//! `demo-passkey`: a full passkey register + login against a live server,
//! with the emulator standing in for the browser.

use passgate::emulator::{EmulatedAuthenticator, Tamper};
use passgate::webauthn::{AuthenticationOptions, RegistrationOptions};
use reqwest::{redirect, Client, StatusCode, Url};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Serialize)]
pub struct Step {
    pub step: &'static str,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub ok: bool,
    pub steps: Vec<Step>,
}

impl Report {
    pub fn failed_step(&self) -> Option<&Step> {
        self.steps.iter().find(|s| !s.ok)
    }
}

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub server: String,
    pub email: String,
    /// Origin the emulated browser claims; defaults to the server URL's origin.
    pub origin: Option<String>,
    pub tamper: Option<Tamper>,
}

struct Demo {
    http: Client,
    base: Url,
    steps: Vec<Step>,
}

type StepResult<T> = Result<T, String>;

impl Demo {
    fn record<T>(&mut self, step: &'static str, result: StepResult<(T, String)>) -> Option<T> {
        match result {
            Ok((value, detail)) => {
                self.steps.push(Step {
                    step,
                    ok: true,
                    detail,
                });
                Some(value)
            }
            Err(detail) => {
                self.steps.push(Step {
                    step,
                    ok: false,
                    detail,
                });
                None
            }
        }
    }

    fn url(&self, path: &str) -> Url {
        self.base.join(path).expect("static paths join")
    }

    async fn post(&self, path: &str, token: Option<&str>, body: Value) -> StepResult<Value> {
        let mut req = self.http.post(self.url(path)).json(&body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        read_json(req.send().await).await
    }

    async fn get(&self, path: &str, token: &str) -> StepResult<Value> {
        read_json(
            self.http
                .get(self.url(path))
                .bearer_auth(token)
                .send()
                .await,
        )
        .await
    }

    async fn location(&self, url: Url) -> StepResult<Url> {
        let resp = self.http.get(url).send().await.map_err(|e| e.to_string())?;
        if resp.status() != StatusCode::FOUND {
            return Err(error_text(resp).await);
        }
        let loc = resp
            .headers()
            .get(reqwest::header::LOCATION)
            .and_then(|v| v.to_str().ok())
            .ok_or("redirect without Location")?;
        self.base.join(loc).map_err(|e| e.to_string())
    }

    /// Signs in through the mock OAuth provider; the demo cannot read mailed codes.
    async fn bootstrap(&self, email: &str) -> StepResult<(String, String)> {
        let mut authorize = self.location(self.url("/auth/oauth/google")).await?;
        authorize.query_pairs_mut().append_pair("login_hint", email);
        let callback = self.location(authorize).await?;
        let body = read_json(self.http.get(callback).send().await).await?;
        let token = str_field(&body, "token")?;
        Ok((token, format!("signed in as {email} via mock OAuth")))
    }
}

async fn error_text(resp: reqwest::Response) -> String {
    let status = resp.status();
    match resp.json::<Value>().await {
        Ok(v) => format!(
            "{} {}: {}",
            status.as_u16(),
            v["code"].as_str().unwrap_or("?"),
            v["message"].as_str().unwrap_or("")
        ),
        Err(_) => format!("HTTP {}", status.as_u16()),
    }
}

async fn read_json(sent: reqwest::Result<reqwest::Response>) -> StepResult<Value> {
    let resp = sent.map_err(|e| format!("request failed: {e}"))?;
    if !resp.status().is_success() {
        return Err(error_text(resp).await);
    }
    resp.json().await.map_err(|e| format!("bad JSON: {e}"))
}

fn str_field(v: &Value, name: &str) -> StepResult<String> {
    v[name]
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| format!("response has no {name}"))
}

fn origin_of(url: &Url) -> String {
    url.origin().ascii_serialization()
}

async fn login(
    demo: &mut Demo,
    auth: &mut EmulatedAuthenticator,
    origin: &str,
    email: &str,
    suffix: &'static [&'static str; 3],
) -> Option<String> {
    let opts = demo
        .post(
            "/auth/passkey/auth-options",
            None,
            json!({ "email": email }),
        )
        .await;
    let opts = demo.record(
        suffix[0],
        opts.and_then(|v| {
            let sid = str_field(&v, "sessionId")?;
            let options: AuthenticationOptions =
                serde_json::from_value(v["options"].clone()).map_err(|e| e.to_string())?;
            let n = options.allow_credentials.len();
            Ok(((sid, options), format!("{n} allowed credential(s)")))
        }),
    )?;
    let (sid, options) = opts;
    let assertion = demo.record(
        suffix[1],
        auth.emulate_get_any(&options, origin)
            .map(|r| (r, "assertion signed".to_owned()))
            .map_err(|e| e.to_string()),
    )?;
    let verify = demo
        .post(
            "/auth/passkey/auth-verify",
            None,
            json!({ "sessionId": sid, "response": assertion }),
        )
        .await;
    demo.record(
        suffix[2],
        verify.and_then(|v| str_field(&v, "token").map(|t| (t, "token issued".to_owned()))),
    )
}

/// Runs register-options → create → register-verify → auth-options → get →
/// auth-verify → /me. With a tamper knob, an honest login runs first and
/// the knob applies to a second login.
pub async fn run(opts: &DemoOptions) -> Report {
    let base = match Url::parse(&opts.server) {
        Ok(u) => u,
        Err(e) => {
            return Report {
                ok: false,
                steps: vec![Step {
                    step: "connect",
                    ok: false,
                    detail: e.to_string(),
                }],
            }
        }
    };
    let origin = opts.origin.clone().unwrap_or_else(|| origin_of(&base));
    let http = Client::builder()
        .redirect(redirect::Policy::none())
        .build()
        .expect("reqwest client builds");
    let mut demo = Demo {
        http,
        base,
        steps: Vec::new(),
    };
    let mut auth = EmulatedAuthenticator::new();
    let _ = run_steps(&mut demo, &mut auth, &origin, opts).await;
    Report {
        ok: demo.steps.iter().all(|s| s.ok),
        steps: demo.steps,
    }
}

async fn run_steps(
    demo: &mut Demo,
    auth: &mut EmulatedAuthenticator,
    origin: &str,
    opts: &DemoOptions,
) -> Option<()> {
    let boot = demo.bootstrap(&opts.email).await;
    let token = demo.record("sign-in", boot)?;

    let reg = demo
        .post("/auth/passkey/register-options", Some(&token), json!({}))
        .await;
    let (sid, options) = demo.record(
        "register-options",
        reg.and_then(|v| {
            let sid = str_field(&v, "sessionId")?;
            let options: RegistrationOptions =
                serde_json::from_value(v["options"].clone()).map_err(|e| e.to_string())?;
            let detail = format!("rp {}", options.rp.id);
            Ok(((sid, options), detail))
        }),
    )?;
    let created = demo.record(
        "create",
        auth.emulate_create(&options, origin)
            .map(|r| {
                let detail = format!("new credential {}", r.id);
                (r, detail)
            })
            .map_err(|e| e.to_string()),
    )?;
    let verify = demo
        .post(
            "/auth/passkey/register-verify",
            Some(&token),
            json!({ "sessionId": sid, "response": created, "deviceName": "passgate demo" }),
        )
        .await;
    demo.record(
        "register-verify",
        verify.map(|v| {
            (
                (),
                format!(
                    "stored passkey {}",
                    v["passkey"]["id"].as_str().unwrap_or("?")
                ),
            )
        }),
    )?;

    let steps = if opts.tamper.is_some() {
        &["warmup-auth-options", "warmup-get", "warmup-auth-verify"]
    } else {
        &["auth-options", "get", "auth-verify"]
    };
    let mut session = login(demo, auth, origin, &opts.email, steps).await?;
    if let Some(knob) = opts.tamper {
        auth.set_tamper(Some(knob));
        session = login(
            demo,
            auth,
            origin,
            &opts.email,
            &["auth-options", "get", "auth-verify"],
        )
        .await?;
    }

    let me = demo.get("/me", &session).await;
    demo.record(
        "me",
        me.and_then(|v| {
            let email = str_field(&v, "email")?;
            Ok(((), format!("authenticated as {email}")))
        }),
    )
}

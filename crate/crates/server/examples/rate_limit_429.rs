//! Hammer the login endpoint until it answers 429, then read Retry-After.

use std::sync::Arc;

use passgate::SystemClock;
use passgate_server::config::ServeArgs;
use passgate_server::server::spawn;
use serde_json::json;

#[tokio::main]
async fn main() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let port = listener.local_addr().unwrap().port();
    let args = ServeArgs {
        port,
        origin: format!("http://localhost:{port}"),
        jwt_secret: Some("example-secret-0123456789abcdef!".into()),
        login_limit: 10,
        ..ServeArgs::default()
    };
    let built = args.build(port, Arc::new(SystemClock)).unwrap();
    let server = spawn(listener, built.state);
    let http = reqwest::Client::new();

    for n in 1..=11 {
        let resp = http
            .post(format!("{}/auth/login", server.base_url()))
            .json(&json!({ "email": "mallory@example.com", "password": "guess number one" }))
            .send()
            .await
            .unwrap();
        let retry = resp
            .headers()
            .get("retry-after")
            .map(|v| v.to_str().unwrap().to_owned());
        let status = resp.status();
        let body: serde_json::Value = resp.json().await.unwrap();
        println!("#{n:<2} {status} {} retry-after={retry:?}", body["code"]);
    }
    server.shutdown().await.unwrap();
}

//! Start the HTTP API in-process and drive a full passkey ceremony through it.

use std::sync::Arc;

use passgate::emulator::Tamper;
use passgate::SystemClock;
use passgate_server::config::ServeArgs;
use passgate_server::demo::{self, DemoOptions};
use passgate_server::server::spawn;

#[tokio::main]
async fn main() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let port = listener.local_addr().unwrap().port();
    let args = ServeArgs {
        port,
        origin: format!("http://localhost:{port}"),
        jwt_secret: Some("example-secret-0123456789abcdef!".into()),
        bcrypt_cost: 4,
        ..ServeArgs::default()
    };
    let built = args.build(port, Arc::new(SystemClock)).unwrap();
    let server = spawn(listener, built.state);

    for tamper in [None, Some(Tamper::WrongOrigin)] {
        let opts = DemoOptions {
            server: server.base_url(),
            email: format!(
                "demo-{}@example.com",
                tamper.map_or("honest", Tamper::as_str)
            ),
            origin: None,
            tamper,
        };
        let report = demo::run(&opts).await;
        println!("tamper={:?} ok={}", opts.tamper, report.ok);
        for step in &report.steps {
            println!("  {:<20} {:<5} {}", step.step, step.ok, step.detail);
        }
    }
    server.shutdown().await.unwrap();
}

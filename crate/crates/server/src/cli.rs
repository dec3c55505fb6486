//! Command-line interface. Exit codes: 0 success, 1 runtime failure,
//! 2 usage or malformed input, 3 configuration error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use passgate::emulator::Tamper;
use passgate::otp::{self, OtpSecret};
use passgate::storage::Store;
use passgate::{SharedClock, SystemClock};

use crate::config::ServeArgs;
use crate::demo::{self, DemoOptions};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "passgate",
    version,
    about = "Passwordless authentication server and tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Register and log in with an emulated passkey against a running server.
    DemoPasskey {
        #[arg(long, default_value = "http://localhost:8080")]
        server: String,
        #[arg(long)]
        email: String,
        /// Origin the emulated browser claims (default: the server URL's origin).
        #[arg(long)]
        origin: Option<String>,
        /// Corrupt one field of the final login: wrong_origin, wrong_type,
        /// stale_challenge, frozen_counter, bad_signature, wrong_rp_hash.
        #[arg(long)]
        tamper: Option<Tamper>,
        #[arg(long)]
        json: bool,
    },
    /// Token administration.
    Token {
        #[command(subcommand)]
        command: TokenCommand,
    },
    /// User administration.
    User {
        #[command(subcommand)]
        command: UserCommand,
    },
    /// TOTP utilities.
    Totp {
        #[command(subcommand)]
        command: TotpCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum TokenCommand {
    /// Revoke a token through a server's /auth/logout, or directly in a snapshot.
    Revoke {
        #[arg(long)]
        token: String,
        #[arg(
            long,
            conflicts_with = "snapshot",
            required_unless_present = "snapshot"
        )]
        server: Option<String>,
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum UserCommand {
    /// Print the users stored in a snapshot.
    List {
        #[arg(long, env = "SNAPSHOT_PATH")]
        snapshot: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum TotpCommand {
    /// Print the TOTP code for a base32 secret at a unix time.
    Gen {
        #[arg(long)]
        secret: String,
        /// Unix seconds; defaults to now.
        #[arg(long)]
        at: Option<u64>,
        #[arg(long, default_value_t = 6)]
        digits: u32,
        #[arg(long, default_value_t = otp::DEFAULT_STEP)]
        step: u64,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

pub fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Serve(args) => serve(args),
        Command::DemoPasskey {
            server,
            email,
            origin,
            tamper,
            json,
        } => {
            let opts = DemoOptions {
                server,
                email,
                origin,
                tamper,
            };
            demo_passkey(&opts, json)
        }
        Command::Token {
            command:
                TokenCommand::Revoke {
                    token,
                    server,
                    snapshot,
                },
        } => revoke(&token, server.as_deref(), snapshot),
        Command::User {
            command: UserCommand::List { snapshot, json },
        } => user_list(&snapshot, json),
        Command::Totp {
            command:
                TotpCommand::Gen {
                    secret,
                    at,
                    digits,
                    step,
                },
        } => totp_gen(&secret, at, digits, step),
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime starts")
}

fn serve(args: ServeArgs) -> ExitCode {
    let rt = runtime();
    rt.block_on(async move {
        let listener = match tokio::net::TcpListener::bind((args.bind, args.port)).await {
            Ok(l) => l,
            Err(e) => {
                return fail(
                    EXIT_RUNTIME,
                    format!("bind {}:{}: {e}", args.bind, args.port),
                )
            }
        };
        let port = listener.local_addr().map(|a| a.port()).unwrap_or(args.port);
        let clock: SharedClock = Arc::new(SystemClock);
        let built = match args.build(port, clock) {
            Ok(b) => b,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        tracing::info!(port, rp_id = %args.rp_id, origin = %args.origin, "listening");
        let served = crate::server::run(listener, built.state, crate::server::termination()).await;
        if let Err(e) = crate::server::persist(&built.store, args.snapshot.as_ref()) {
            return fail(EXIT_RUNTIME, format!("persisting snapshot: {e}"));
        }
        match served {
            Ok(()) => {
                tracing::info!("stopped");
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_RUNTIME, e),
        }
    })
}

fn demo_passkey(opts: &DemoOptions, json: bool) -> ExitCode {
    let report = runtime().block_on(demo::run(opts));
    let mut out = std::io::stdout().lock();
    if json {
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        for s in &report.steps {
            let mark = if s.ok { "ok  " } else { "FAIL" };
            let _ = writeln!(out, "[{mark}] {:<20} {}", s.step, s.detail);
        }
    }
    match report.failed_step() {
        None => ExitCode::SUCCESS,
        Some(step) => {
            if !json {
                eprintln!("demo failed at {}", step.step);
            }
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn revoke(token: &str, server: Option<&str>, snapshot: Option<PathBuf>) -> ExitCode {
    if let Some(path) = snapshot {
        let store = match Store::open_json(&path, Arc::new(SystemClock)) {
            Ok(s) => s,
            Err(e) => return fail(EXIT_RUNTIME, e),
        };
        return match store.blacklist_add(token) {
            Ok(()) => {
                println!("revoked in {}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_USAGE, e),
        };
    }
    let server = server.expect("clap requires --server or --snapshot");
    let url = format!("{}/auth/logout", server.trim_end_matches('/'));
    let result = runtime().block_on(async {
        let resp = reqwest::Client::new()
            .post(&url)
            .bearer_auth(token)
            .send()
            .await?;
        let status = resp.status();
        let body: serde_json::Value = resp.json().await.unwrap_or_default();
        Ok::<_, reqwest::Error>((status, body))
    });
    match result {
        Ok((status, _)) if status.is_success() => {
            println!("revoked");
            ExitCode::SUCCESS
        }
        Ok((status, body)) => fail(
            EXIT_RUNTIME,
            format!(
                "{} {}",
                status.as_u16(),
                body["code"].as_str().unwrap_or("error")
            ),
        ),
        Err(e) => fail(EXIT_RUNTIME, e),
    }
}

fn user_list(path: &std::path::Path, json: bool) -> ExitCode {
    let store = match Store::load_snapshot(path, Arc::new(SystemClock)) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let snap = store.snapshot();
    let rows: Vec<_> = snap
        .users
        .iter()
        .map(|u| {
            let passkeys = snap
                .credentials
                .iter()
                .filter(|c| c.user_id == u.user_id)
                .count();
            (u, passkeys)
        })
        .collect();
    if json {
        let list: Vec<_> = rows
            .iter()
            .map(|(u, n)| {
                serde_json::json!({
                    "userId": u.user_id,
                    "email": u.email,
                    "createdAt": u.created_at,
                    "password": u.password_hash.is_some(),
                    "oauth": u.oauth_subject.is_some(),
                    "passkeys": n,
                })
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&list).expect("serializes")
        );
    } else {
        println!(
            "{:<24} {:<32} {:<20} {:>8}",
            "USER_ID", "EMAIL", "CREATED", "PASSKEYS"
        );
        for (u, n) in rows {
            println!(
                "{:<24} {:<32} {:<20} {:>8}",
                u.user_id.as_str(),
                u.email,
                u.created_at.format("%Y-%m-%d %H:%M:%S"),
                n
            );
        }
    }
    ExitCode::SUCCESS
}

fn totp_gen(secret: &str, at: Option<u64>, digits: u32, step: u64) -> ExitCode {
    let secret = match OtpSecret::from_base32(secret) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    if step == 0 {
        return fail(EXIT_USAGE, "--step must be positive");
    }
    let at = at.unwrap_or_else(|| chrono::Utc::now().timestamp().max(0) as u64);
    match otp::totp_at(&secret, at, step, digits) {
        Ok(code) => {
            println!("{}", code.as_str());
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_USAGE, e),
    }
}

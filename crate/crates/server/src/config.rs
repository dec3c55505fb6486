//! `serve` settings, read from flags or the environment.

use std::net::IpAddr;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::Duration;
use clap::{Args, ValueEnum};
use passgate::flows::{CaptureMailer, FlowConfig, Flows, Mailer, MockProvider, RateLimit};
use passgate::storage::{SnapshotError, Store};
use passgate::webauthn::{RelyingParty, RpConfigError};
use passgate::SharedClock;
use thiserror::Error;

use crate::app::{AppState, HttpSettings};
use crate::mailer::LogMailer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MailerKind {
    /// Keep messages in memory.
    Capture,
    /// Write messages, codes included, to the log.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OAuthKind {
    /// Built-in provider served at /oauth/mock/authorize.
    Mock,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "BIND", default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// JSON snapshot file; rewritten on every durable change and on shutdown.
    #[arg(long = "snapshot", env = "SNAPSHOT_PATH")]
    pub snapshot: Option<PathBuf>,
    #[arg(long, env = "RP_ID", default_value = "localhost")]
    pub rp_id: String,
    #[arg(long, env = "RP_NAME", default_value = "PassGate")]
    pub rp_name: String,
    /// Origin the browser (or emulator) runs at.
    #[arg(
        long = "origin",
        env = "EXPECTED_ORIGIN",
        default_value = "http://localhost:8080"
    )]
    pub origin: String,
    /// Base URL this server is reachable at; defaults to http://localhost:PORT.
    #[arg(long, env = "PUBLIC_URL")]
    pub public_url: Option<String>,
    /// HS256 key, at least 32 bytes. A random key is used when unset.
    #[arg(long, env = "JWT_SECRET", hide_env_values = true)]
    pub jwt_secret: Option<String>,
    /// Token lifetime in seconds (at most 3600).
    #[arg(long, env = "TOKEN_TTL", default_value_t = 3600)]
    pub token_ttl: i64,
    #[arg(long, env = "MAILER", value_enum, default_value = "log")]
    pub mailer: MailerKind,
    #[arg(long, env = "OAUTH", value_enum, default_value = "mock")]
    pub oauth: OAuthKind,
    #[arg(long, env = "BCRYPT_COST", default_value_t = passgate::password::DEFAULT_COST)]
    pub bcrypt_cost: u32,
    /// Registration code lifetime in seconds.
    #[arg(long, env = "CODE_TTL", default_value_t = 30)]
    pub code_ttl: i64,
    #[arg(long, env = "RATE_LIMIT_WINDOW", default_value_t = 60)]
    pub rate_window: i64,
    #[arg(long, env = "RATE_LIMIT_CODE", default_value_t = 3)]
    pub code_limit: u32,
    #[arg(long, env = "RATE_LIMIT_LOGIN", default_value_t = 10)]
    pub login_limit: u32,
    #[arg(long, env = "RATE_LIMIT_PASSKEY", default_value_t = 20)]
    pub passkey_limit: u32,
    /// Send Strict-Transport-Security (when TLS terminates in front of this server).
    #[arg(long, env = "HSTS")]
    pub hsts: bool,
}

impl Default for ServeArgs {
    fn default() -> Self {
        Self {
            port: 8080,
            bind: IpAddr::from([127, 0, 0, 1]),
            snapshot: None,
            rp_id: "localhost".into(),
            rp_name: "PassGate".into(),
            origin: "http://localhost:8080".into(),
            public_url: None,
            jwt_secret: None,
            token_ttl: 3600,
            mailer: MailerKind::Log,
            oauth: OAuthKind::Mock,
            bcrypt_cost: passgate::password::DEFAULT_COST,
            code_ttl: 30,
            rate_window: 60,
            code_limit: 3,
            login_limit: 10,
            passkey_limit: 20,
            hsts: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("relying party: {0}")]
    RelyingParty(#[from] RpConfigError),
    #[error("snapshot: {0}")]
    Snapshot(#[from] SnapshotError),
    #[error("{0}")]
    Invalid(String),
}

/// Everything `serve` needs, built from [`ServeArgs`].
pub struct Built {
    pub state: Arc<AppState>,
    pub store: Arc<Store>,
    pub capture: Option<Arc<CaptureMailer>>,
}

impl ServeArgs {
    pub fn public_url(&self, port: u16) -> String {
        self.public_url
            .clone()
            .unwrap_or_else(|| format!("http://localhost:{port}"))
            .trim_end_matches('/')
            .to_owned()
    }

    fn flow_config(&self) -> Result<FlowConfig, ConfigError> {
        if self.rate_window <= 0 {
            return Err(ConfigError::Invalid(
                "RATE_LIMIT_WINDOW must be positive".into(),
            ));
        }
        if self.code_ttl <= 0 {
            return Err(ConfigError::Invalid("CODE_TTL must be positive".into()));
        }
        let window = Duration::seconds(self.rate_window);
        let limit = |max: u32| {
            if max == 0 {
                Err(ConfigError::Invalid("rate limits must be positive".into()))
            } else {
                Ok(RateLimit { max, window })
            }
        };
        Ok(FlowConfig {
            bcrypt_cost: self.bcrypt_cost,
            token_ttl: Duration::seconds(self.token_ttl),
            registration_code_ttl: Duration::seconds(self.code_ttl),
            code_request_limit: limit(self.code_limit)?,
            login_limit: limit(self.login_limit)?,
            passkey_verify_limit: limit(self.passkey_limit)?,
            ..FlowConfig::default()
        })
    }

    /// Builds the application for a server listening on `port`.
    pub fn build(&self, port: u16, clock: SharedClock) -> Result<Built, ConfigError> {
        let rp = RelyingParty::new(&self.rp_id, &self.rp_name, &self.origin)?;
        let secret = match &self.jwt_secret {
            Some(s) => s.as_bytes().to_vec(),
            None => {
                tracing::warn!(
                    "JWT_SECRET unset; using a random key, tokens will not survive a restart"
                );
                let mut key = vec![0u8; 32];
                rand_key(&mut key);
                key
            }
        };
        let store = Arc::new(match &self.snapshot {
            Some(path) => Store::open_json(path, clock.clone())?,
            None => Store::in_memory(clock.clone()),
        });
        let (mailer, capture): (Arc<dyn Mailer>, _) = match self.mailer {
            MailerKind::Capture => {
                let c = Arc::new(CaptureMailer::new());
                (c.clone(), Some(c))
            }
            MailerKind::Log => (Arc::new(LogMailer), None),
        };
        let base = self.public_url(port);
        let mock = match self.oauth {
            OAuthKind::Mock => Arc::new(MockProvider::new(
                format!("{base}/oauth/mock/authorize"),
                format!("{base}/auth/oauth/callback"),
                clock,
            )),
        };
        let flows = Flows::new(
            store.clone(),
            rp,
            secret,
            mailer,
            mock.clone(),
            self.flow_config()?,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut settings = HttpSettings::for_origin(&self.origin);
        settings.hsts = self.hsts;
        let state = Arc::new(AppState {
            flows: Arc::new(flows),
            mock_oauth: Some(mock),
            settings,
        });
        Ok(Built {
            state,
            store,
            capture,
        })
    }
}

fn rand_key(buf: &mut [u8]) {
    use rand::RngCore;
    rand::rngs::OsRng.fill_bytes(buf);
}

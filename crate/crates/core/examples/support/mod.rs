#![allow(dead_code)]

use std::sync::Arc;

use passgate::flows::{CaptureMailer, FlowConfig, Flows, MockProvider};
use passgate::storage::{Store, UserId};
use passgate::webauthn::RelyingParty;
use passgate::{ManualClock, SharedClock};

pub const ORIGIN: &str = "https://login.example.com";

pub struct Demo {
    pub clock: ManualClock,
    pub flows: Flows,
    pub mail: Arc<CaptureMailer>,
    pub oauth: Arc<MockProvider>,
}

pub fn setup() -> Demo {
    let clock = ManualClock::at_unix(1_700_000_000);
    let shared: SharedClock = Arc::new(clock.clone());
    let store = Arc::new(Store::in_memory(shared.clone()));
    let rp = RelyingParty::new("example.com", "Example", ORIGIN).unwrap();
    let mail = Arc::new(CaptureMailer::new());
    let oauth = Arc::new(MockProvider::new(
        format!("{ORIGIN}/oauth/mock/authorize"),
        format!("{ORIGIN}/auth/oauth/callback"),
        shared,
    ));
    let config = FlowConfig {
        bcrypt_cost: 4,
        ..FlowConfig::default()
    };
    let flows = Flows::new(
        store,
        rp,
        b"example-secret-0123456789abcdef!",
        mail.clone(),
        oauth.clone(),
        config,
    )
    .unwrap();
    Demo {
        clock,
        flows,
        mail,
        oauth,
    }
}

impl Demo {
    pub fn register(&self, email: &str) -> UserId {
        self.flows.request_registration_code(email).unwrap();
        let code = self.mail.last_code_for(email).unwrap();
        self.flows.verify_registration_code(email, &code).unwrap();
        self.flows
            .set_password_and_promote(email, "example password")
            .unwrap()
    }
}

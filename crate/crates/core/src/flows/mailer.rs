use std::sync::Mutex;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutgoingMail {
    pub to: String,
    pub subject: String,
    pub body: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("mail delivery failed: {0}")]
pub struct MailError(pub String);

/// Delivery of verification codes.
pub trait Mailer: Send + Sync {
    fn send(&self, mail: &OutgoingMail) -> Result<(), MailError>;
}

/// Records every message instead of delivering it.
#[derive(Debug, Default)]
pub struct CaptureMailer {
    sent: Mutex<Vec<OutgoingMail>>,
}

impl CaptureMailer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sent(&self) -> Vec<OutgoingMail> {
        self.sent.lock().expect("mailer poisoned").clone()
    }

    pub fn count(&self) -> usize {
        self.sent.lock().expect("mailer poisoned").len()
    }

    pub fn last_to(&self, to: &str) -> Option<OutgoingMail> {
        self.sent
            .lock()
            .expect("mailer poisoned")
            .iter()
            .rev()
            .find(|m| m.to == to)
            .cloned()
    }

    /// First run of six or more digits in the newest mail to `to`.
    pub fn last_code_for(&self, to: &str) -> Option<String> {
        let mail = self.last_to(to)?;
        mail.body
            .split(|c: char| !c.is_ascii_digit())
            .find(|run| run.len() >= 6)
            .map(str::to_owned)
    }
}

impl Mailer for CaptureMailer {
    fn send(&self, mail: &OutgoingMail) -> Result<(), MailError> {
        self.sent
            .lock()
            .expect("mailer poisoned")
            .push(mail.clone());
        Ok(())
    }
}

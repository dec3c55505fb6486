use passgate::flows::{MailError, Mailer, OutgoingMail};

/// Writes each message to the log instead of delivering it. Development only:
/// codes appear in plain text.
#[derive(Debug, Default)]
pub struct LogMailer;

impl Mailer for LogMailer {
    fn send(&self, mail: &OutgoingMail) -> Result<(), MailError> {
        tracing::info!(to = %mail.to, subject = %mail.subject, body = %mail.body, "mail");
        Ok(())
    }
}

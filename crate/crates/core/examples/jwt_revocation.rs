//! Issue a JWT, revoke it, and watch the blacklist entry expire.

use std::sync::Arc;

use chrono::Duration;
use passgate::storage::{Store, UserId};
use passgate::tokens::TokenService;
use passgate::ManualClock;

fn main() {
    let clock = ManualClock::at_unix(1_700_000_000);
    let store = Arc::new(Store::in_memory(Arc::new(clock.clone())));
    let tokens = TokenService::new(
        b"example-secret-0123456789abcdef!",
        Duration::hours(1),
        store.clone(),
    )
    .unwrap();

    let token = tokens.issue(UserId::random(), "ada@example.com");
    println!("token: {}", token.as_str());
    println!(
        "verify: {:?}",
        tokens.verify(token.as_str()).map(|c| c.email)
    );

    tokens.revoke(token.as_str()).unwrap();
    println!(
        "after revoke: {:?}",
        tokens.verify(token.as_str()).map(|c| c.email)
    );
    println!("blacklisted: {}", store.blacklist_contains(token.as_str()));

    clock.advance(Duration::minutes(61));
    println!(
        "+61 min verify: {:?}",
        tokens.verify(token.as_str()).map(|c| c.email)
    );
    println!(
        "+61 min blacklisted: {}",
        store.blacklist_contains(token.as_str())
    );
}

//! Persist the store to a JSON snapshot and load it back.

use std::sync::Arc;

use chrono::Utc;
use passgate::storage::{Store, UserRecord};
use passgate::SystemClock;

fn main() {
    let dir = std::env::temp_dir().join(format!("passgate-snapshot-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("store.json");

    let store = Store::open_json(&path, Arc::new(SystemClock)).unwrap();
    for email in ["ada@example.com", "grace@example.com"] {
        store
            .upsert_user(UserRecord::new(email, Utc::now()))
            .unwrap();
    }
    store.blacklist_add("some.revoked.token").unwrap();
    println!("{}", std::fs::read_to_string(&path).unwrap());

    let reloaded = Store::load_snapshot(&path, Arc::new(SystemClock)).unwrap();
    for user in reloaded.list_users() {
        println!("{} {}", user.user_id, user.email);
    }
    println!(
        "blacklisted: {}",
        reloaded.blacklist_contains("some.revoked.token")
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

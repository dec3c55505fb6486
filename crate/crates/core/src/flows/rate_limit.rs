//! Fixed-window request limiter keyed by (route, client key).

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::Duration;

use crate::clock::SharedClock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateLimit {
    pub max: u32,
    pub window: Duration,
}

impl RateLimit {
    pub const fn per_minute(max: u32) -> Self {
        Self {
            max,
            window: Duration::seconds(60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateDecision {
    Allow {
        remaining: u32,
    },
    /// `retry_after` runs to the end of the current window (at least one second).
    Deny {
        retry_after: Duration,
    },
}

impl RateDecision {
    pub fn is_allowed(self) -> bool {
        matches!(self, RateDecision::Allow { .. })
    }
}

const PRUNE_THRESHOLD: usize = 10_000;

/// Windows are aligned to multiples of the window length since the Unix
/// epoch; every key's counter resets at the same boundary.
pub struct RateLimiter {
    clock: SharedClock,
    limits: HashMap<String, RateLimit>,
    windows: Mutex<HashMap<(String, String), (i64, u32)>>,
}

impl std::fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateLimiter")
            .field("limits", &self.limits)
            .finish_non_exhaustive()
    }
}

impl RateLimiter {
    pub fn new(clock: SharedClock) -> Self {
        Self {
            clock,
            limits: HashMap::new(),
            windows: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_limit(mut self, route: &str, limit: RateLimit) -> Self {
        self.limits.insert(route.to_owned(), limit);
        self
    }

    pub fn limit(&self, route: &str) -> Option<RateLimit> {
        self.limits.get(route).copied()
    }

    /// Counts one request. Unconfigured routes are always allowed.
    pub fn check_rate(&self, route: &str, client_key: &str) -> RateDecision {
        let Some(limit) = self.limit(route) else {
            return RateDecision::Allow {
                remaining: u32::MAX,
            };
        };
        let window_ms = limit.window.num_milliseconds().max(1);
        let now_ms = self.clock.now().timestamp_millis();
        let window_start = now_ms.div_euclid(window_ms) * window_ms;

        let mut windows = self.windows.lock().expect("rate limiter poisoned");
        if windows.len() > PRUNE_THRESHOLD {
            windows.retain(|_, (start, _)| *start == window_start);
        }
        let entry = windows
            .entry((route.to_owned(), client_key.to_owned()))
            .or_insert((window_start, 0));
        if entry.0 != window_start {
            *entry = (window_start, 0);
        }
        if entry.1 < limit.max {
            entry.1 += 1;
            RateDecision::Allow {
                remaining: limit.max - entry.1,
            }
        } else {
            let remaining_ms = window_start + window_ms - now_ms;
            let secs = (remaining_ms + 999) / 1000;
            RateDecision::Deny {
                retry_after: Duration::seconds(secs.max(1)),
            }
        }
    }
}

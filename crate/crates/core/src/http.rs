//! Blocking JSON-over-HTTP client shared by the NLI and judge backends.
//!
//! Requests are limited to `max_in_flight` concurrent calls. Transport
//! failures, timeouts, 429 and 5xx responses are retried with exponential
//! backoff (doubling from `initial_backoff`, capped at the request timeout);
//! any other non-2xx status or an undecodable body fails immediately.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_INITIAL_BACKOFF: Duration = Duration::from_millis(500);

#[derive(Clone, Debug)]
pub struct RetryPolicy {
    pub timeout: Duration,
    pub retries: u32,
    pub initial_backoff: Duration,
}

impl RetryPolicy {
    /// Sleep before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(20));
        self.initial_backoff.saturating_mul(factor).min(self.timeout)
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub(crate) struct Semaphore {
    available: Mutex<usize>,
    cond: Condvar,
}

pub(crate) struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub(crate) fn new(permits: usize) -> Self {
        Semaphore {
            available: Mutex::new(permits),
            cond: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cond.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.cond.notify_one();
    }
}

enum Failure {
    Retryable(String),
    Fatal(Error),
}

pub(crate) struct JsonClient {
    client: reqwest::blocking::Client,
    limiter: Semaphore,
    policy: RetryPolicy,
    bearer: Option<String>,
}

impl JsonClient {
    pub(crate) fn new(max_in_flight: usize, policy: RetryPolicy, bearer: Option<String>) -> Result<Self> {
        if max_in_flight == 0 {
            return Err(Error::invalid("max_in_flight must be ≥ 1"));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(policy.timeout)
            .build()
            .map_err(|e| Error::Backend(format!("cannot build HTTP client: {e}")))?;
        Ok(JsonClient {
            client,
            limiter: Semaphore::new(max_in_flight),
            policy,
            bearer,
        })
    }

    pub(crate) fn post<B, T>(&self, url: &str, body: &B) -> Result<T>
    where
        B: Serialize + ?Sized,
        T: DeserializeOwned,
    {
        let mut last = String::new();
        for attempt in 0..=self.policy.retries {
            if attempt > 0 {
                thread::sleep(self.policy.backoff(attempt - 1));
            }
            let outcome = {
                let _permit = self.limiter.acquire();
                self.post_once(url, body)
            };
            match outcome {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => last = msg,
            }
        }
        Err(Error::BackendUnavailable(format!(
            "{url} failed after {} attempt(s): {last}",
            self.policy.retries + 1
        )))
    }

    fn post_once<B, T>(&self, url: &str, body: &B) -> Result<T, Failure>
    where
        B: Serialize + ?Sized,
        T: DeserializeOwned,
    {
        let mut req = self.client.post(url).json(body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| Failure::Retryable(format!("reading body: {e}")))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(Error::Backend(format!(
                "{url} returned {status}: {}",
                truncate(&text, 200)
            ))));
        }
        serde_json::from_str(&text).map_err(|e| {
            Failure::Fatal(Error::Backend(format!(
                "malformed response body from {url}: {e}: {}",
                truncate(&text, 200)
            )))
        })
    }
}

/// Reads a bearer token from the environment, ignoring blank values.
pub(crate) fn bearer_from_env(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.trim().is_empty())
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn backoff_doubles_and_caps_at_timeout() {
        let p = RetryPolicy {
            timeout: Duration::from_secs(3),
            retries: 5,
            initial_backoff: DEFAULT_INITIAL_BACKOFF,
        };
        let waits: Vec<_> = (0..5).map(|a| p.backoff(a).as_millis()).collect();
        assert_eq!(waits, [500, 1000, 2000, 3000, 3000]);
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        let sem = Arc::new(Semaphore::new(3));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..12)
            .map(|_| {
                let (sem, live, peak) = (sem.clone(), live.clone(), peak.clone());
                thread::spawn(move || {
                    let _p = sem.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(10));
                    live.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn zero_in_flight_rejected() {
        let p = RetryPolicy {
            timeout: Duration::from_secs(1),
            retries: 0,
            initial_backoff: DEFAULT_INITIAL_BACKOFF,
        };
        assert!(JsonClient::new(0, p, None).is_err());
    }
}

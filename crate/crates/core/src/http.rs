//! Blocking HTTP fetching with politeness limits and retries.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use tracing::warn;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

pub trait Transport: Send + Sync {
    /// One GET request. `Err` means no response was received at all.
    fn get(&self, url: &str, headers: &[(&str, &str)]) -> Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        UreqTransport {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, headers: &[(&str, &str)]) -> Result<HttpResponse, String> {
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let mut resp = req.call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before the first retry; doubles each time.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Enforces a minimum interval between consecutive requests.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        RateLimiter {
            min_interval,
            last: Mutex::new(None),
        }
    }

    pub fn min_interval(&self) -> Duration {
        self.min_interval
    }

    pub fn wait(&self) {
        let mut last = self.last.lock().expect("rate limiter lock");
        if let Some(t) = *last {
            let next = t + self.min_interval;
            let now = Instant::now();
            if next > now {
                thread::sleep(next - now);
            }
        }
        *last = Some(Instant::now());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    #[error("{url}: gave up after {attempts} attempts: {last_error}")]
    Exhausted {
        url: String,
        attempts: u32,
        last_error: String,
    },
    #[error("{url}: HTTP {status}")]
    Status { url: String, status: u16 },
}

fn retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

/// GET with rate limiting; connection failures, 429 and 5xx are retried
/// with exponential backoff, other non-2xx statuses fail at once.
pub fn get_with_retry(
    transport: &dyn Transport,
    url: &str,
    headers: &[(&str, &str)],
    policy: RetryPolicy,
    limiter: &RateLimiter,
) -> Result<HttpResponse, FetchError> {
    let mut delay = policy.base_delay;
    let mut attempt = 0;
    loop {
        attempt += 1;
        limiter.wait();
        let last_error = match transport.get(url, headers) {
            Ok(r) if (200..300).contains(&r.status) => return Ok(r),
            Ok(r) if !retryable(r.status) => {
                return Err(FetchError::Status {
                    url: url.to_string(),
                    status: r.status,
                })
            }
            Ok(r) => format!("HTTP {}", r.status),
            Err(e) => e,
        };
        if attempt > policy.max_retries {
            return Err(FetchError::Exhausted {
                url: url.to_string(),
                attempts: attempt,
                last_error,
            });
        }
        warn!(url, attempt, error = %last_error, "request failed, retrying");
        thread::sleep(delay);
        delay = delay.saturating_mul(2);
    }
}

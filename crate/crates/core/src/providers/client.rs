use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use rand::Rng;

use super::endpoint::ProviderEndpoint;
use super::wire::{ProviderRequest, ProviderResponse};
use super::ProviderError;

/// Outcome of one attempt at the transport layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptError {
    /// Worth retrying: 429, 408, 5xx, connection failures, timeouts.
    Retryable(String),
    Fatal(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, path: &str, req: &ProviderRequest) -> Result<ProviderResponse, AttemptError>;
}

/// JSON over HTTP POST to `{base_url}{path}`.
pub struct HttpTransport {
    base_url: String,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &ProviderEndpoint) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(endpoint.timeout_ms))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(HttpTransport {
            base_url: endpoint.base_url.trim_end_matches('/').to_string(),
            client,
            api_key: endpoint.api_key(),
        })
    }
}

pub fn is_retryable_status(status: u16) -> bool {
    status == 429 || status == 408 || (500..600).contains(&status)
}

impl Transport for HttpTransport {
    fn send(&self, path: &str, req: &ProviderRequest) -> Result<ProviderResponse, AttemptError> {
        let mut rb = self
            .client
            .post(format!("{}{}", self.base_url, path))
            .json(req);
        if let Some(k) = &self.api_key {
            rb = rb.bearer_auth(k);
        }
        let resp = rb
            .send()
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        if !resp.status().is_success() {
            let msg = format!("HTTP {status}");
            return Err(if is_retryable_status(status) {
                AttemptError::Retryable(msg)
            } else {
                AttemptError::Fatal(msg)
            });
        }
        resp.json::<ProviderResponse>()
            .map_err(|e| AttemptError::Fatal(format!("bad response body: {e}")))
    }
}

/// Counts outstanding requests and blocks callers past the limit.
#[derive(Debug)]
pub struct InFlightLedger {
    limit: usize,
    current: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

pub struct InFlightGuard<'a>(&'a InFlightLedger);

impl InFlightLedger {
    pub fn new(limit: usize) -> Self {
        InFlightLedger {
            limit: limit.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.current.lock().expect("ledger lock");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("ledger lock");
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::SeqCst);
        InFlightGuard(self)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.current.lock().expect("ledger lock");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// Spaces request starts at least `1 / rate` seconds apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(per_second: f64) -> Self {
        RateLimiter {
            interval: (per_second > 0.0 && per_second.is_finite())
                .then(|| Duration::from_secs_f64(1.0 / per_second)),
            next: Mutex::new(None),
        }
    }

    pub fn wait(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let slot = {
            let mut next = self.next.lock().expect("limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

/// Delay before retry number `retry` (0-based): `d = base * 2^retry` plus a
/// uniform jitter in `[0, d)`, never above `cap`.
pub fn backoff_delay(retry: u32, base: Duration, cap: Duration, rng: &mut impl Rng) -> Duration {
    let exp = base.saturating_mul(1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX));
    let floor = exp.min(cap);
    let jitter = if floor.is_zero() {
        Duration::ZERO
    } else {
        Duration::from_nanos(rng.gen_range(0..floor.as_nanos().min(u64::MAX as u128) as u64))
    };
    (floor + jitter).min(cap)
}

#[derive(Debug, Default)]
pub struct ClientStats {
    pub requests: AtomicU64,
    pub attempts: AtomicU64,
    pub retries: AtomicU64,
    pub failures: AtomicU64,
}

/// Retrying, rate-limited, concurrency-bounded provider client.
pub struct Client {
    endpoint: ProviderEndpoint,
    transport: Arc<dyn Transport>,
    ledger: InFlightLedger,
    limiter: RateLimiter,
    pub stats: ClientStats,
}

impl Client {
    pub fn new(
        endpoint: ProviderEndpoint,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, ProviderError> {
        endpoint.check()?;
        Ok(Client {
            ledger: InFlightLedger::new(endpoint.max_in_flight),
            limiter: RateLimiter::new(endpoint.rate_limit_per_s),
            endpoint,
            transport,
            stats: ClientStats::default(),
        })
    }

    pub fn http(endpoint: ProviderEndpoint) -> Result<Self, ProviderError> {
        let t = HttpTransport::new(&endpoint)?;
        Client::new(endpoint, Arc::new(t))
    }

    pub fn endpoint(&self) -> &ProviderEndpoint {
        &self.endpoint
    }

    pub fn peak_in_flight(&self) -> usize {
        self.ledger.peak()
    }

    /// Fill `image_b64` from a local file when the endpoint inlines images.
    fn prepare(&self, req: &ProviderRequest) -> ProviderRequest {
        let mut req = req.clone();
        if self.endpoint.inline_images && req.image_b64.is_none() {
            if let Ok(bytes) = std::fs::read(&req.image_ref) {
                req.image_b64 = Some(base64::engine::general_purpose::STANDARD.encode(bytes));
            }
        }
        req
    }

    /// At most `1 + max_retries` attempts; each waits for a rate slot and an
    /// in-flight permit.
    pub fn call(
        &self,
        path: &str,
        req: &ProviderRequest,
    ) -> Result<ProviderResponse, ProviderError> {
        let req = self.prepare(req);
        self.stats.requests.fetch_add(1, Ordering::Relaxed);
        let base = Duration::from_millis(self.endpoint.backoff_base_ms);
        let cap = Duration::from_millis(self.endpoint.backoff_cap_ms);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            self.limiter.wait();
            let result = {
                let _permit = self.ledger.acquire();
                self.stats.attempts.fetch_add(1, Ordering::Relaxed);
                self.transport.send(path, &req)
            };
            let message = match result {
                Ok(resp) => return Ok(resp),
                Err(AttemptError::Fatal(m)) => {
                    self.stats.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(ProviderError::Failed {
                        id: req.id.clone(),
                        attempts: attempt,
                        message: m,
                    });
                }
                Err(AttemptError::Retryable(m)) => m,
            };
            if attempt > self.endpoint.max_retries {
                self.stats.failures.fetch_add(1, Ordering::Relaxed);
                return Err(ProviderError::Failed {
                    id: req.id.clone(),
                    attempts: attempt,
                    message,
                });
            }
            self.stats.retries.fetch_add(1, Ordering::Relaxed);
            let delay = backoff_delay(attempt - 1, base, cap, &mut rand::thread_rng());
            std::thread::sleep(delay);
        }
    }
}

//! Deterministic stand-ins for provider services.
//!
//! [`MockCore`] answers the three provider paths. It can be used directly as
//! an in-process [`Transport`] or served over HTTP by [`MockServer`], which
//! speaks exactly the wire protocol of a real provider. Both keep a
//! transcript of every attempt and the peak number of concurrent requests.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::client::{is_retryable_status, AttemptError, Transport};
use super::vqa::{ground_words, grounded_answer, VqaAnswer};
use super::wire::{ProviderRequest, ProviderResponse, ASSERT_PATH, CAPTION_PATH, VQA_PATH};
use crate::corpus::CaptionRecord;
use crate::richness::RuleBasedAssertions;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub path: String,
    pub id: String,
    pub status: u16,
    pub started: Duration,
    pub finished: Duration,
}

#[derive(Debug, Default)]
pub struct MockCore {
    ground: HashMap<String, BTreeSet<String>>,
    fail_first: Option<(u32, u16)>,
    fail_always: HashSet<String>,
    latency: Duration,
    attempts: Mutex<HashMap<(String, String), u32>>,
    transcript: Mutex<Vec<TranscriptEntry>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    epoch: Option<Instant>,
}

impl MockCore {
    pub fn new() -> Self {
        MockCore {
            epoch: Some(Instant::now()),
            ..Default::default()
        }
    }

    /// Treat each record's `gt_objects` as the content of its image.
    pub fn with_ground<'a>(mut self, records: impl IntoIterator<Item = &'a CaptionRecord>) -> Self {
        for r in records {
            if let Some(gt) = &r.gt_objects {
                self.ground.insert(r.image_ref.clone(), ground_words(gt));
            }
        }
        self
    }

    /// Every (path, id) pair fails `times` times with `status` before succeeding.
    pub fn fail_first(mut self, times: u32, status: u16) -> Self {
        self.fail_first = Some((times, status));
        self
    }

    /// Requests for `id` always fail with HTTP 503.
    pub fn fail_always(mut self, id: impl Into<String>) -> Self {
        self.fail_always.insert(id.into());
        self
    }

    pub fn latency(mut self, d: Duration) -> Self {
        self.latency = d;
        self
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.lock().expect("transcript lock").clone()
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    /// Status code and body for one attempt.
    pub fn handle(&self, path: &str, req: &ProviderRequest) -> (u16, Option<ProviderResponse>) {
        let epoch = self.epoch.unwrap_or_else(Instant::now);
        let started = epoch.elapsed();
        let n = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(n, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let attempt = {
            let mut a = self.attempts.lock().expect("attempts lock");
            let e = a.entry((path.to_string(), req.id.clone())).or_insert(0);
            *e += 1;
            *e
        };
        let (status, body) = if self.fail_always.contains(&req.id) {
            (503, None)
        } else if let Some((times, status)) = self.fail_first.filter(|(t, _)| attempt <= *t) {
            let _ = times;
            (status, None)
        } else {
            match self.reply(path, req) {
                Some(text) => (
                    200,
                    Some(ProviderResponse {
                        id: req.id.clone(),
                        text,
                    }),
                ),
                None => (404, None),
            }
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.transcript
            .lock()
            .expect("transcript lock")
            .push(TranscriptEntry {
                path: path.to_string(),
                id: req.id.clone(),
                status,
                started,
                finished: epoch.elapsed(),
            });
        (status, body)
    }

    fn reply(&self, path: &str, req: &ProviderRequest) -> Option<String> {
        let input = req.input.as_deref().unwrap_or(&req.prompt);
        match path {
            CAPTION_PATH => Some(format!(
                "caption for {} [{}]",
                req.id,
                req.format.as_deref().unwrap_or("unknown")
            )),
            ASSERT_PATH => Some(
                RuleBasedAssertions::clauses(input)
                    .into_iter()
                    .map(|r| input[r].to_string())
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
            VQA_PATH => {
                let empty = BTreeSet::new();
                let ground = self.ground.get(&req.image_ref).unwrap_or(&empty);
                Some(match grounded_answer(input, ground) {
                    VqaAnswer::Yes => "yes".into(),
                    _ => "no".into(),
                })
            }
            _ => None,
        }
    }
}

impl Transport for MockCore {
    fn send(&self, path: &str, req: &ProviderRequest) -> Result<ProviderResponse, AttemptError> {
        match self.handle(path, req) {
            (_, Some(resp)) => Ok(resp),
            (s, None) if is_retryable_status(s) => {
                Err(AttemptError::Retryable(format!("HTTP {s}")))
            }
            (s, None) => Err(AttemptError::Fatal(format!("HTTP {s}"))),
        }
    }
}

/// [`MockCore`] behind a local HTTP server, one thread per request.
pub struct MockServer {
    core: Arc<MockCore>,
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(core: MockCore) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0")
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("not an ip listener"))?;
        let server = Arc::new(server);
        let core = Arc::new(core);
        let (s, c) = (server.clone(), core.clone());
        let worker = std::thread::spawn(move || {
            for request in s.incoming_requests() {
                let c = c.clone();
                std::thread::spawn(move || serve_one(&c, request));
            }
        });
        Ok(MockServer {
            core,
            server,
            addr,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn core(&self) -> &MockCore {
        &self.core
    }
}

fn serve_one(core: &MockCore, mut request: tiny_http::Request) {
    let mut body = String::new();
    let path = request.url().split('?').next().unwrap_or("").to_string();
    let response = if request.as_reader().read_to_string(&mut body).is_err() {
        tiny_http::Response::from_string("unreadable body").with_status_code(400)
    } else {
        match serde_json::from_str::<ProviderRequest>(&body) {
            Err(e) => tiny_http::Response::from_string(e.to_string()).with_status_code(400),
            Ok(req) => match core.handle(&path, &req) {
                (s, Some(resp)) => tiny_http::Response::from_string(
                    serde_json::to_string(&resp).expect("response serializes"),
                )
                .with_status_code(s)
                .with_header(
                    "Content-Type: application/json"
                        .parse::<tiny_http::Header>()
                        .expect("static header"),
                ),
                (s, None) => tiny_http::Response::from_string("").with_status_code(s),
            },
        }
    };
    let _ = request.respond(response);
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

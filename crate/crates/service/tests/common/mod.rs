#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use milrw_core::generation::{GenerationBackend, GenerationConfig, HttpBackend, StubBackend};
use milrw_core::markup::ModelInputStyle;
use milrw_core::session::{Constraints, EventLog, ManualClock, Task};
use milrw_service::server::serve_on;
use milrw_service::{Arm, Workbench};
use serde_json::Value;

pub const TOKEN: &str = "test-admin-token";

pub fn pool(n: usize) -> Vec<Task> {
    (0..n)
        .map(|i| Task {
            task_id: format!("img-{:02}", i + 1),
            image_ref: format!("images/{:02}.jpg", i + 1),
            prompt_text: format!("Write a caption for picture {}", i + 1),
            constraints: Constraints::default(),
        })
        .collect()
}

pub fn stub_arm(name: &str, seed: u64, style: ModelInputStyle) -> Arm {
    Arm { name: name.into(), backend: Arc::new(StubBackend::new(name, seed)), style }
}

pub fn dead_http_arm(name: &str) -> Arm {
    let backend: Arc<dyn GenerationBackend> =
        Arc::new(HttpBackend::new(name, "http://127.0.0.1:9/suggest", Duration::from_millis(300)));
    Arm { name: name.into(), backend, style: ModelInputStyle::Markers }
}

pub struct TestServer {
    pub base: String,
    pub workbench: Arc<Workbench>,
    pub clock: Arc<ManualClock>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start(pool: Vec<Task>, arms: Vec<Arm>, seed: u64) -> TestServer {
        let clock = Arc::new(ManualClock::new(1_700_000_000_000));
        let log = EventLog::in_memory(clock.clone());
        let cfg = GenerationConfig { seed, ..Default::default() };
        let wb = Arc::new(Workbench::new(log, BTreeMap::new(), pool, arms, cfg, seed));
        Self::start_with(wb, clock)
    }

    pub fn start_with(workbench: Arc<Workbench>, clock: Arc<ManualClock>) -> TestServer {
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let wb = workbench.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                let shutdown = async move {
                    let _ = rx.await;
                };
                serve_on(listener, wb, Some(TOKEN.into()), Duration::from_secs(7200), shutdown).await.unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        TestServer { base: format!("http://{addr}"), workbench, clock, stop: Some(tx), thread: Some(thread) }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub struct Reply {
    pub status: u16,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or(Value::Null)
    }

    pub fn code(&self) -> String {
        self.json()["error"]["code"].as_str().unwrap_or_default().to_string()
    }
}

/// HTTP client that keeps every response body it sees.
pub struct Client {
    base: String,
    agent: ureq::Agent,
    pub seen: Mutex<Vec<String>>,
}

impl Client {
    pub fn new(base: &str) -> Client {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Client { base: base.to_string(), agent, seen: Mutex::new(Vec::new()) }
    }

    fn finish(&self, resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Reply {
        let mut resp = resp.expect("request reaches the server");
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        self.seen.lock().unwrap().push(text.clone());
        Reply { status, text }
    }

    pub fn post(&self, path: &str, body: Value) -> Reply {
        self.finish(self.agent.post(&format!("{}{}", self.base, path)).send_json(&body))
    }

    pub fn post_raw(&self, path: &str, body: &str) -> Reply {
        let req = self.agent.post(&format!("{}{}", self.base, path)).header("content-type", "application/json");
        self.finish(req.send(body))
    }

    pub fn get(&self, path: &str) -> Reply {
        self.finish(self.agent.get(&format!("{}{}", self.base, path)).call())
    }

    /// Admin GET; admin bodies are not client-facing and are not kept.
    pub fn admin_get(&self, path: &str, token: Option<&str>) -> Reply {
        let mut req = self.agent.get(&format!("{}{}", self.base, path));
        if let Some(t) = token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.call().expect("request reaches the server");
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        Reply { status, text }
    }

    pub fn seen(&self) -> Vec<String> {
        self.seen.lock().unwrap().clone()
    }
}

/// Wrap the `k`-th whitespace word of `text` in a rewrite span.
pub fn mark(text: &str, k: usize) -> String {
    let mut words: Vec<String> = text.split_whitespace().map(String::from).collect();
    let k = k % words.len();
    words[k] = format!("[ {} ]", words[k]);
    words.join(" ")
}

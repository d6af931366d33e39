//! Append-only event storage and replay.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::event::{header_line, EventPayload, InteractionEvent, EVENT_SCHEMA};
use super::{Session, SessionError};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Byte sink for whole log lines.
pub trait EventStore: Send {
    /// Append complete lines with a single write.
    fn append(&mut self, bytes: &[u8]) -> io::Result<()>;
    fn contents(&self) -> io::Result<String>;
}

#[derive(Debug, Default, Clone)]
pub struct MemoryEventStore {
    buf: String,
}

impl MemoryEventStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_contents(buf: impl Into<String>) -> Self {
        MemoryEventStore { buf: buf.into() }
    }
}

impl EventStore for MemoryEventStore {
    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        let s = std::str::from_utf8(bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        self.buf.push_str(s);
        Ok(())
    }

    fn contents(&self) -> io::Result<String> {
        Ok(self.buf.clone())
    }
}

/// JSONL file opened in append mode.
#[derive(Debug)]
pub struct JsonlEventStore {
    path: PathBuf,
    file: File,
}

impl JsonlEventStore {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(JsonlEventStore { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventStore for JsonlEventStore {
    fn append(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.file.write_all(bytes)?;
        self.file.flush()
    }

    fn contents(&self) -> io::Result<String> {
        std::fs::read_to_string(&self.path)
    }
}

struct LogInner {
    store: Box<dyn EventStore>,
    next_id: u64,
    has_header: bool,
}

/// The single serialized appender. Event ids are assigned under the same lock
/// as the write, so ids are strictly increasing in file order.
pub struct EventLog {
    inner: Mutex<LogInner>,
    clock: Arc<dyn Clock>,
}

impl EventLog {
    /// Wrap a store, replaying whatever it already holds.
    pub fn open(
        store: Box<dyn EventStore>,
        clock: Arc<dyn Clock>,
    ) -> Result<(EventLog, BTreeMap<String, Session>), SessionError> {
        let text = store.contents()?;
        let events = parse_events(&text)?;
        let next_id = events.last().map(|(_, e)| e.event_id + 1).unwrap_or(1);
        let sessions = replay_events(&events)?;
        let log = EventLog {
            inner: Mutex::new(LogInner { store, next_id, has_header: !text.is_empty() }),
            clock,
        };
        Ok((log, sessions))
    }

    pub fn in_memory(clock: Arc<dyn Clock>) -> EventLog {
        EventLog {
            inner: Mutex::new(LogInner { store: Box::new(MemoryEventStore::new()), next_id: 1, has_header: false }),
            clock,
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Assign the next id, stamp and append one event.
    pub fn record(&self, session_id: &str, payload: EventPayload) -> Result<InteractionEvent, SessionError> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let ev = InteractionEvent {
            event_id: inner.next_id,
            session_id: session_id.to_string(),
            ts: self.clock.now_ms(),
            payload,
        };
        let mut bytes = String::new();
        if !inner.has_header {
            bytes.push_str(&header_line());
            bytes.push('\n');
        }
        bytes.push_str(&ev.to_line());
        bytes.push('\n');
        inner.store.append(bytes.as_bytes())?;
        inner.has_header = true;
        inner.next_id += 1;
        Ok(ev)
    }

    /// Full log text, read under the append lock.
    pub fn text(&self) -> Result<String, SessionError> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        Ok(inner.store.contents()?)
    }

    pub fn last_event_id(&self) -> u64 {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).next_id - 1
    }
}

/// Parse a log into events, tagged with their 1-based line numbers.
///
/// A non-empty log must start with the schema header, end with a newline,
/// and have strictly increasing event ids.
pub fn parse_events(text: &str) -> Result<Vec<(usize, InteractionEvent)>, SessionError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let corrupt = |line: usize, reason: String| SessionError::CorruptLog { line, reason };
    let lines: Vec<&str> = text.split('\n').collect();
    // split leaves a trailing "" when the text ends with '\n'
    let (last, complete) = lines.split_last().expect("non-empty");
    if !last.is_empty() {
        return Err(corrupt(lines.len(), "truncated line (no trailing newline)".into()));
    }
    let mut out = Vec::with_capacity(complete.len().saturating_sub(1));
    let mut prev_id = 0u64;
    for (i, line) in complete.iter().enumerate() {
        let n = i + 1;
        if n == 1 {
            let header: serde_json::Value =
                serde_json::from_str(line).map_err(|e| corrupt(1, format!("bad header: {e}")))?;
            if header.get("schema").and_then(|s| s.as_str()) != Some(EVENT_SCHEMA) {
                return Err(corrupt(1, format!("expected schema {EVENT_SCHEMA}")));
            }
            continue;
        }
        let ev: InteractionEvent = serde_json::from_str(line).map_err(|e| corrupt(n, e.to_string()))?;
        if ev.event_id <= prev_id {
            return Err(corrupt(n, format!("event id {} not after {}", ev.event_id, prev_id)));
        }
        prev_id = ev.event_id;
        out.push((n, ev));
    }
    Ok(out)
}

/// Rebuild sessions by applying events in order.
pub fn replay_events(events: &[(usize, InteractionEvent)]) -> Result<BTreeMap<String, Session>, SessionError> {
    let mut sessions: BTreeMap<String, Session> = BTreeMap::new();
    for (line, ev) in events {
        let corrupt = |e: SessionError| SessionError::CorruptLog { line: *line, reason: e.to_string() };
        match sessions.get_mut(&ev.session_id) {
            Some(s) => s.apply(ev).map_err(corrupt)?,
            None => {
                let s = Session::from_event(ev).map_err(corrupt)?;
                sessions.insert(ev.session_id.clone(), s);
            }
        }
    }
    Ok(sessions)
}

pub fn replay(text: &str) -> Result<BTreeMap<String, Session>, SessionError> {
    replay_events(&parse_events(text)?)
}

pub fn replay_file(path: &Path) -> Result<BTreeMap<String, Session>, SessionError> {
    replay(&std::fs::read_to_string(path)?)
}

/// Session states as of a given event id, for checking a log later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub last_event_id: u64,
    pub sessions: BTreeMap<String, Session>,
}

impl Snapshot {
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut json = serde_json::to_string(self).map_err(io::Error::other)?;
        json.push('\n');
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(tmp, path)
    }

    pub fn read(path: &Path) -> io::Result<Snapshot> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    /// Replay `log_text` up to this snapshot's event id and compare.
    pub fn check(&self, log_text: &str) -> Result<(), String> {
        let events = parse_events(log_text).map_err(|e| e.to_string())?;
        let upto: Vec<_> = events.into_iter().filter(|(_, e)| e.event_id <= self.last_event_id).collect();
        let reached = upto.last().map(|(_, e)| e.event_id).unwrap_or(0);
        if reached < self.last_event_id {
            return Err(format!("log ends at event {reached}, snapshot is at {}", self.last_event_id));
        }
        let sessions = replay_events(&upto).map_err(|e| e.to_string())?;
        for id in self.sessions.keys().chain(sessions.keys()) {
            if self.sessions.get(id) != sessions.get(id) {
                return Err(format!("session {id} differs from snapshot"));
            }
        }
        Ok(())
    }
}

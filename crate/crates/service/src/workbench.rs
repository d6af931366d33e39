//! Shared study state behind the HTTP API.
//!
//! Each session sits behind its own mutex so one slow backend call never
//! blocks another session. The registry lock guards creation and the
//! assigner's view of occupied cells. Lock order is registry, then session;
//! closing a session updates the registry only after the session lock is
//! released.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use milrw_core::analytics::{build_report, read_votes, MetricsReport, ReportOptions, VoteRecord};
use milrw_core::corpus::{read_pairs, TrainingPair};
use milrw_core::feedback::{extract_pairs, mix_with_original, unmixed, ExtractOptions, FeedbackDataset};
use milrw_core::generation::{GenerationBackend, GenerationConfig};
use milrw_core::markup::ModelInputStyle;
use milrw_core::session::{
    close_session, create_session, record_decision, record_suggestion_round, submit_caption, submit_survey, Action,
    BalancedAssigner, Clock, Constraints, EventLog, JsonlEventStore, MemoryEventStore, Session, SessionError,
    SessionState, Snapshot, SurveyResponse, Task,
};
use serde::Serialize;

use crate::config::{ConfigError, ServiceConfig};
use crate::error::ServiceError;

pub struct Arm {
    pub name: String,
    pub backend: Arc<dyn GenerationBackend>,
    pub style: ModelInputStyle,
}

#[derive(Default)]
struct Registry {
    sessions: BTreeMap<String, Arc<Mutex<Session>>>,
    /// session id -> (task id, arm)
    cells: BTreeMap<String, (String, String)>,
    closed: HashSet<String>,
}

/// What a client may see of a task; the arm is never included.
#[derive(Debug, Clone, Serialize)]
pub struct TaskView {
    pub task_id: String,
    pub image_ref: String,
    pub prompt_text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PendingRound {
    pub request_id: String,
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub task: TaskView,
    pub constraints: Constraints,
    pub state: SessionState,
    pub current_draft: String,
    pub request_count: usize,
    pub accepted_count: usize,
    pub survey_submitted: bool,
    /// The latest round, while it awaits a decision.
    pub pending: Option<PendingRound>,
}

impl SessionView {
    fn of(s: &Session) -> Self {
        let pending = s.rounds.last().filter(|r| r.decision.is_none()).map(|r| PendingRound {
            request_id: r.request_id.clone(),
            suggestions: r.suggestion_set.suggestions.clone(),
        });
        SessionView {
            session_id: s.session_id.clone(),
            task: TaskView {
                task_id: s.task.task_id.clone(),
                image_ref: s.task.image_ref.clone(),
                prompt_text: s.task.prompt_text.clone(),
            },
            constraints: s.task.constraints,
            state: s.state,
            current_draft: s.current_draft.clone(),
            request_count: s.request_count,
            accepted_count: s.accepted_count,
            survey_submitted: s.survey.is_some(),
            pending,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuggestionView {
    pub request_id: String,
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct FeedbackQuery {
    pub ratio: Option<f64>,
    pub seed: u64,
    pub options: ExtractOptions,
}

pub struct Workbench {
    log: EventLog,
    pool: Vec<Task>,
    arms: Vec<Arm>,
    arm_names: Vec<String>,
    cfg: GenerationConfig,
    assigner: BalancedAssigner,
    registry: Mutex<Registry>,
    base_corpus: Option<Vec<TrainingPair>>,
    votes: Vec<VoteRecord>,
    snapshot_path: Option<PathBuf>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Workbench {
    /// Build over an opened log and the sessions replayed from it.
    pub fn new(
        log: EventLog,
        sessions: BTreeMap<String, Session>,
        pool: Vec<Task>,
        arms: Vec<Arm>,
        cfg: GenerationConfig,
        assign_seed: u64,
    ) -> Self {
        let mut reg = Registry::default();
        for (id, s) in sessions {
            reg.cells.insert(id.clone(), (s.task.task_id.clone(), s.arm.clone()));
            if s.state == SessionState::Closed {
                reg.closed.insert(id.clone());
            }
            reg.sessions.insert(id, Arc::new(Mutex::new(s)));
        }
        Workbench {
            log,
            pool,
            arm_names: arms.iter().map(|a| a.name.clone()).collect(),
            arms,
            cfg,
            assigner: BalancedAssigner::new(assign_seed),
            registry: Mutex::new(reg),
            base_corpus: None,
            votes: Vec::new(),
            snapshot_path: None,
        }
    }

    /// Open the configured log (or an in-memory one) and load every input.
    pub fn from_config(cfg: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ConfigError> {
        let pool = cfg.load_tasks()?;
        let arms = cfg
            .arms
            .iter()
            .map(|a| Ok(Arm { name: a.name.clone(), backend: a.build_backend()?, style: a.input_style }))
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let store: Box<dyn milrw_core::session::EventStore> = match &cfg.event_log {
            Some(path) => Box::new(
                JsonlEventStore::open(path).map_err(|e| ConfigError::Io { path: path.clone(), source: e })?,
            ),
            None => Box::new(MemoryEventStore::new()),
        };
        let (log, sessions) = EventLog::open(store, clock).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let known: HashSet<&str> = cfg.arms.iter().map(|a| a.name.as_str()).collect();
        if let Some(s) = sessions.values().find(|s| !known.contains(s.arm.as_str())) {
            return Err(ConfigError::Invalid(format!("log has session {} on an unconfigured arm", s.session_id)));
        }
        let mut wb = Workbench::new(log, sessions, pool, arms, cfg.generation, cfg.assign_seed);
        if let Some(path) = &cfg.base_corpus {
            wb.base_corpus = Some(read_pairs(path).map_err(|e| ConfigError::Invalid(e.to_string()))?);
        }
        if let Some(path) = &cfg.votes {
            wb.votes = read_votes(path).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        wb.snapshot_path = cfg.snapshot.clone();
        Ok(wb)
    }

    pub fn with_base_corpus(mut self, pairs: Vec<TrainingPair>) -> Self {
        self.base_corpus = Some(pairs);
        self
    }

    pub fn arm_names(&self) -> &[String] {
        &self.arm_names
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        lock(&self.registry)
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()).into())
    }

    fn mark_closed(&self, id: &str) {
        lock(&self.registry).closed.insert(id.to_string());
    }

    pub fn create(&self) -> Result<SessionView, ServiceError> {
        let mut reg = lock(&self.registry);
        let occupied: Vec<(&str, &str)> = reg
            .cells
            .iter()
            .filter(|(id, _)| !reg.closed.contains(*id))
            .map(|(_, (task, arm))| (task.as_str(), arm.as_str()))
            .collect();
        let created = reg.sessions.len() as u64;
        let s = create_session(&self.log, &self.pool, &self.arm_names, &self.assigner, &occupied, created)?;
        let view = SessionView::of(&s);
        let id = s.session_id.clone();
        reg.cells.insert(id.clone(), (s.task.task_id.clone(), s.arm.clone()));
        reg.sessions.insert(id, Arc::new(Mutex::new(s)));
        Ok(view)
    }

    pub fn view(&self, id: &str) -> Result<SessionView, ServiceError> {
        let s = self.session(id)?;
        let guard = lock(&s);
        Ok(SessionView::of(&guard))
    }

    /// Blocks on the backend; call from a blocking context.
    pub fn suggest(&self, id: &str, raw_draft: &str) -> Result<SuggestionView, ServiceError> {
        let s = self.session(id)?;
        let mut guard = lock(&s);
        let arm = self
            .arms
            .iter()
            .find(|a| a.name == guard.arm)
            .ok_or_else(|| ServiceError::Internal(format!("no backend for session {id}")))?;
        let set = record_suggestion_round(&self.log, &mut guard, raw_draft, &self.cfg, arm.backend.as_ref(), arm.style)?;
        Ok(SuggestionView { request_id: set.request_id, suggestions: set.suggestions })
    }

    pub fn decide(&self, id: &str, request_id: &str, action: Action) -> Result<String, ServiceError> {
        let s = self.session(id)?;
        let mut guard = lock(&s);
        record_decision(&self.log, &mut guard, request_id, action)?;
        Ok(guard.current_draft.clone())
    }

    pub fn submit(&self, id: &str, caption: &str) -> Result<(), ServiceError> {
        let s = self.session(id)?;
        let mut guard = lock(&s);
        submit_caption(&self.log, &mut guard, caption)?;
        Ok(())
    }

    pub fn survey(&self, id: &str, survey: SurveyResponse) -> Result<(), ServiceError> {
        let s = self.session(id)?;
        let mut guard = lock(&s);
        submit_survey(&self.log, &mut guard, survey)?;
        Ok(())
    }

    /// Close every active session idle for longer than `timeout_ms`.
    /// Sessions busy with a request are skipped.
    pub fn expire_idle(&self, timeout_ms: u64) -> Result<Vec<String>, ServiceError> {
        let all: Vec<Arc<Mutex<Session>>> = lock(&self.registry).sessions.values().cloned().collect();
        let now = self.log.now_ms();
        let mut closed = Vec::new();
        for s in all {
            let Ok(mut guard) = s.try_lock() else { continue };
            if guard.state == SessionState::Active && now.saturating_sub(guard.last_activity_ms) > timeout_ms {
                close_session(&self.log, &mut guard, "idle_timeout")?;
                closed.push(guard.session_id.clone());
            }
        }
        for id in &closed {
            self.mark_closed(id);
        }
        Ok(closed)
    }

    pub fn export_events(&self) -> Result<String, ServiceError> {
        Ok(self.log.text()?)
    }

    pub fn export_feedback(&self, q: &FeedbackQuery) -> Result<FeedbackDataset, ServiceError> {
        let text = self.log.text()?;
        let ex = extract_pairs(&text, &q.options)?;
        match (&self.base_corpus, q.ratio) {
            (Some(base), ratio) => Ok(mix_with_original(ex, base, ratio.unwrap_or(1.0), q.seed, q.options)?),
            (None, Some(_)) => Err(ServiceError::NoBaseCorpus),
            (None, None) => Ok(unmixed(ex, q.seed, q.options)),
        }
    }

    pub fn report(&self, opts: &ReportOptions) -> Result<MetricsReport, ServiceError> {
        let text = self.log.text()?;
        Ok(build_report(&text, &BTreeMap::new(), &self.votes, opts)?)
    }

    /// Live state of every session, taken while no event can be appended.
    pub fn snapshot(&self) -> Snapshot {
        let reg = lock(&self.registry);
        let guards: Vec<_> = reg.sessions.values().map(|s| lock(s)).collect();
        let sessions = guards.iter().map(|g| (g.session_id.clone(), (**g).clone())).collect();
        Snapshot { last_event_id: self.log.last_event_id(), sessions }
    }

    pub fn write_snapshot(&self) -> Result<(), ServiceError> {
        if let Some(path) = &self.snapshot_path {
            self.snapshot().write(path).map_err(|e| ServiceError::Internal(e.to_string()))?;
        }
        Ok(())
    }
}

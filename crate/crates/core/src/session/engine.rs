//! Live session operations. Each one checks the step against the session,
//! appends the event, then applies it.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::{
    Action, BalancedAssigner, EventLog, EventPayload, Session, SessionError, SessionState, SurveyResponse, Task,
};
use crate::generation::{request_suggestions, GenerationBackend, GenerationConfig, SuggestionSet};
use crate::markup::{parse_markup, to_model_input_with, ModelInputStyle};

fn commit(log: &EventLog, session: &mut Session, payload: EventPayload) -> Result<(), SessionError> {
    session.check(&payload)?;
    let ev = log.record(&session.session_id, payload)?;
    session.apply(&ev)
}

/// Assign a (task, arm) cell and open a session for it. `occupied` lists the
/// cells held by sessions that are not closed; `created_so_far` counts every
/// session ever created and fixes the new session's id.
pub fn create_session(
    log: &EventLog,
    pool: &[Task],
    arms: &[String],
    assigner: &BalancedAssigner,
    occupied: &[(&str, &str)],
    created_so_far: u64,
) -> Result<Session, SessionError> {
    let (i, arm) = assigner.assign(pool, arms, occupied, created_so_far)?;
    let session_id = format!("s-{:06}", created_so_far + 1);
    let ev = log.record(&session_id, EventPayload::SessionCreated { task: pool[i].clone(), arm })?;
    Session::from_event(&ev)
}

/// Parse the draft, fetch suggestions from the session's backend and record
/// the round. Nothing is recorded if parsing or generation fails.
pub fn record_suggestion_round(
    log: &EventLog,
    session: &mut Session,
    raw_draft: &str,
    cfg: &GenerationConfig,
    backend: &dyn GenerationBackend,
    style: ModelInputStyle,
) -> Result<SuggestionSet, SessionError> {
    if session.state != SessionState::Active {
        return Err(SessionError::NotActive(session.state));
    }
    let draft = parse_markup(raw_draft)?;
    let input = to_model_input_with(&draft, style)?;
    let request_id = format!("{}-r{}", session.session_id, session.request_count + 1);
    let set = request_suggestions(&input, cfg, backend, &request_id)?;
    if raw_draft != session.current_draft {
        commit(log, session, EventPayload::DraftEdited { new_draft: raw_draft.to_string() })?;
    }
    commit(
        log,
        session,
        EventPayload::SuggestionRequested { raw_draft: raw_draft.to_string(), suggestion_set: set.clone() },
    )?;
    Ok(set)
}

pub fn record_decision(
    log: &EventLog,
    session: &mut Session,
    request_id: &str,
    action: Action,
) -> Result<(), SessionError> {
    commit(log, session, EventPayload::DecisionMade { request_id: request_id.to_string(), action })
}

pub fn submit_caption(log: &EventLog, session: &mut Session, caption: &str) -> Result<(), SessionError> {
    commit(log, session, EventPayload::CaptionSubmitted { caption: caption.to_string() })
}

pub fn submit_survey(log: &EventLog, session: &mut Session, survey: SurveyResponse) -> Result<(), SessionError> {
    commit(log, session, EventPayload::SurveySubmitted(survey))
}

/// Close an abandoned session, keeping its last draft as the final text.
pub fn close_session(log: &EventLog, session: &mut Session, reason: &str) -> Result<(), SessionError> {
    let final_draft = session.current_draft.clone();
    commit(log, session, EventPayload::SessionClosed { reason: reason.to_string(), final_draft })
}

struct Arm {
    backend: Arc<dyn GenerationBackend>,
    style: ModelInputStyle,
}

/// Single-threaded study driver over one log: the same operations the
/// service performs, keyed by session id.
pub struct Study {
    pub log: EventLog,
    pub sessions: BTreeMap<String, Session>,
    pub pool: Vec<Task>,
    pub cfg: GenerationConfig,
    pub assigner: BalancedAssigner,
    arm_names: Vec<String>,
    arms: HashMap<String, Arm>,
}

impl Study {
    pub fn new(log: EventLog, sessions: BTreeMap<String, Session>, pool: Vec<Task>, cfg: GenerationConfig, assign_seed: u64) -> Self {
        Study {
            log,
            sessions,
            pool,
            cfg,
            assigner: BalancedAssigner::new(assign_seed),
            arm_names: Vec::new(),
            arms: HashMap::new(),
        }
    }

    pub fn add_arm(&mut self, name: &str, backend: Arc<dyn GenerationBackend>, style: ModelInputStyle) {
        if !self.arms.contains_key(name) {
            self.arm_names.push(name.to_string());
        }
        self.arms.insert(name.to_string(), Arm { backend, style });
    }

    pub fn arm_names(&self) -> &[String] {
        &self.arm_names
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    fn session_mut(&mut self, id: &str) -> Result<&mut Session, SessionError> {
        self.sessions.get_mut(id).ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn create_session(&mut self) -> Result<String, SessionError> {
        let occupied: Vec<(&str, &str)> = self
            .sessions
            .values()
            .filter(|s| s.state != SessionState::Closed)
            .map(|s| (s.task.task_id.as_str(), s.arm.as_str()))
            .collect();
        let s = create_session(
            &self.log,
            &self.pool,
            &self.arm_names,
            &self.assigner,
            &occupied,
            self.sessions.len() as u64,
        )?;
        let id = s.session_id.clone();
        self.sessions.insert(id.clone(), s);
        Ok(id)
    }

    pub fn suggest(&mut self, id: &str, raw_draft: &str) -> Result<SuggestionSet, SessionError> {
        let cfg = self.cfg;
        let arm_name = self.session_mut(id)?.arm.clone();
        let arm = self
            .arms
            .get(&arm_name)
            .ok_or_else(|| SessionError::InvalidEvent(format!("no backend for arm {arm_name}")))?;
        let (backend, style) = (arm.backend.clone(), arm.style);
        let session = self.sessions.get_mut(id).expect("checked above");
        record_suggestion_round(&self.log, session, raw_draft, &cfg, backend.as_ref(), style)
    }

    pub fn decide(&mut self, id: &str, request_id: &str, action: Action) -> Result<String, SessionError> {
        let session = self.sessions.get_mut(id).ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        record_decision(&self.log, session, request_id, action)?;
        Ok(session.current_draft.clone())
    }

    pub fn submit(&mut self, id: &str, caption: &str) -> Result<(), SessionError> {
        let session = self.sessions.get_mut(id).ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        submit_caption(&self.log, session, caption)
    }

    pub fn survey(&mut self, id: &str, survey: SurveyResponse) -> Result<(), SessionError> {
        let session = self.sessions.get_mut(id).ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        submit_survey(&self.log, session, survey)
    }

    pub fn close(&mut self, id: &str, reason: &str) -> Result<(), SessionError> {
        let session = self.sessions.get_mut(id).ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        close_session(&self.log, session, reason)
    }

    /// Close every active session idle for longer than `timeout_ms`.
    pub fn expire_idle(&mut self, timeout_ms: u64) -> Result<Vec<String>, SessionError> {
        let now = self.log.now_ms();
        let mut closed = Vec::new();
        for s in self.sessions.values_mut() {
            if s.state == SessionState::Active && now.saturating_sub(s.last_activity_ms) > timeout_ms {
                close_session(&self.log, s, "idle_timeout")?;
                closed.push(s.session_id.clone());
            }
        }
        Ok(closed)
    }

    pub fn log_text(&self) -> Result<String, SessionError> {
        self.log.text()
    }
}

//! Event-sourced study sessions.
//!
//! Every state change is an [`InteractionEvent`] appended to the log, and
//! [`Session::apply`] is the only place session state changes. Live
//! operations validate, append, then apply; replay applies the same events in
//! log order, so both paths produce identical sessions.

mod assign;
mod engine;
mod event;
mod store;

pub use assign::BalancedAssigner;
pub use engine::{
    close_session, create_session, record_decision, record_suggestion_round, submit_caption, submit_survey, Study,
};
pub use event::{header_line, Action, EventPayload, InteractionEvent, EVENT_SCHEMA};
pub use store::{
    parse_events, replay, replay_events, replay_file, Clock, EventLog, EventStore, JsonlEventStore, ManualClock,
    MemoryEventStore, Snapshot, SystemClock,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{GenerationError, SuggestionSet};
use crate::markup::MarkupError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constraints {
    pub min_caption_chars: usize,
    pub min_requests: usize,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints { min_caption_chars: 100, min_requests: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    /// Opaque image reference; never sent to a backend.
    pub image_ref: String,
    pub prompt_text: String,
    #[serde(default)]
    pub constraints: Constraints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub helpfulness: u8,
    pub grammaticality: u8,
    pub satisfaction: u8,
    pub self_skill: u8,
}

impl SurveyResponse {
    pub fn validate(&self) -> Result<(), SessionError> {
        for (name, v) in [
            ("helpfulness", self.helpfulness),
            ("grammaticality", self.grammaticality),
            ("satisfaction", self.satisfaction),
            ("self_skill", self.self_skill),
        ] {
            if !(1..=5).contains(&v) {
                return Err(SessionError::InvalidSurvey(format!("{name} must be in 1..=5, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Active,
    Submitted,
    Closed,
}

/// One suggestion request and its decision, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub request_id: String,
    pub event_id: u64,
    pub raw_draft: String,
    pub suggestion_set: SuggestionSet,
    pub decision: Option<Action>,
    pub decision_event_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub task: Task,
    pub arm: String,
    pub current_draft: String,
    pub request_count: usize,
    pub accepted_count: usize,
    pub state: SessionState,
    pub final_caption: Option<String>,
    pub survey: Option<SurveyResponse>,
    pub close_reason: Option<String>,
    pub rounds: Vec<Round>,
    pub created_ms: u64,
    pub last_activity_ms: u64,
    pub last_event_id: u64,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} already exists")]
    DuplicateSession(String),
    #[error("session is {0:?}, not active")]
    NotActive(SessionState),
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error("request {0} already decided")]
    AlreadyDecided(String),
    #[error("suggestion index {index} out of range for {len} suggestions")]
    BadIndex { index: usize, len: usize },
    #[error("caption too short: {actual} characters, {required} required")]
    TooShort { actual: usize, required: usize },
    #[error("too few suggestion requests: {actual}, {required} required")]
    TooFewRequests { actual: usize, required: usize },
    #[error("session has not been submitted")]
    NotSubmitted,
    #[error("survey already submitted")]
    SurveyAlreadySubmitted,
    #[error("invalid survey: {0}")]
    InvalidSurvey(String),
    #[error("task pool is empty")]
    EmptyPool,
    #[error("every image and arm combination is taken")]
    PoolExhausted,
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error(transparent)]
    Markup(#[from] MarkupError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("event store: {0}")]
    Store(#[from] std::io::Error),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "UNKNOWN_SESSION",
            SessionError::DuplicateSession(_) => "DUPLICATE_SESSION",
            SessionError::NotActive(_) => "SESSION_NOT_ACTIVE",
            SessionError::UnknownRequest(_) => "UNKNOWN_REQUEST",
            SessionError::AlreadyDecided(_) => "ALREADY_DECIDED",
            SessionError::BadIndex { .. } => "BAD_INDEX",
            SessionError::TooShort { .. } => "TOO_SHORT",
            SessionError::TooFewRequests { .. } => "TOO_FEW_REQUESTS",
            SessionError::NotSubmitted => "NOT_SUBMITTED",
            SessionError::SurveyAlreadySubmitted => "SURVEY_ALREADY_SUBMITTED",
            SessionError::InvalidSurvey(_) => "INVALID_SURVEY",
            SessionError::EmptyPool => "EMPTY_POOL",
            SessionError::PoolExhausted => "POOL_EXHAUSTED",
            SessionError::InvalidEvent(_) => "INVALID_EVENT",
            SessionError::CorruptLog { .. } => "CORRUPT_LOG",
            SessionError::Markup(e) => e.code(),
            SessionError::Generation(GenerationError::BackendUnavailable(_)) => "BACKEND_UNAVAILABLE",
            SessionError::Generation(GenerationError::NoCandidates) => "NO_CANDIDATES",
            SessionError::Generation(GenerationError::MalformedResponse(_)) => "MALFORMED_BACKEND_RESPONSE",
            SessionError::Generation(GenerationError::InvalidConfig(_)) => "INVALID_GENERATION_CONFIG",
            SessionError::Generation(GenerationError::InvalidInput(e)) => e.code(),
            SessionError::Store(_) => "STORE_ERROR",
        }
    }
}

/// Caption length as counted by the submission gate.
pub fn caption_chars(caption: &str) -> usize {
    caption.trim().chars().count()
}

impl Session {
    /// Start a session from its `SessionCreated` event.
    pub fn from_event(ev: &InteractionEvent) -> Result<Session, SessionError> {
        let EventPayload::SessionCreated { task, arm } = &ev.payload else {
            return Err(SessionError::InvalidEvent(format!(
                "first event of {} is {}, not session_created",
                ev.session_id,
                ev.payload.kind()
            )));
        };
        Ok(Session {
            session_id: ev.session_id.clone(),
            task: task.clone(),
            arm: arm.clone(),
            current_draft: String::new(),
            request_count: 0,
            accepted_count: 0,
            state: SessionState::Active,
            final_caption: None,
            survey: None,
            close_reason: None,
            rounds: Vec::new(),
            created_ms: ev.ts,
            last_activity_ms: ev.ts,
            last_event_id: ev.event_id,
        })
    }

    pub fn round(&self, request_id: &str) -> Option<&Round> {
        self.rounds.iter().find(|r| r.request_id == request_id)
    }

    /// Check that `payload` is a legal next step without changing anything.
    pub fn check(&self, payload: &EventPayload) -> Result<(), SessionError> {
        let active = || {
            if self.state == SessionState::Active {
                Ok(())
            } else {
                Err(SessionError::NotActive(self.state))
            }
        };
        match payload {
            EventPayload::SessionCreated { .. } => Err(SessionError::DuplicateSession(self.session_id.clone())),
            EventPayload::SuggestionRequested { raw_draft, suggestion_set } => {
                active()?;
                if *raw_draft != self.current_draft {
                    return Err(SessionError::InvalidEvent("request draft differs from current draft".into()));
                }
                if self.round(&suggestion_set.request_id).is_some() {
                    return Err(SessionError::InvalidEvent(format!(
                        "duplicate request id {}",
                        suggestion_set.request_id
                    )));
                }
                if suggestion_set.suggestions.is_empty() {
                    return Err(SessionError::InvalidEvent("suggestion set is empty".into()));
                }
                Ok(())
            }
            EventPayload::DecisionMade { request_id, action } => {
                active()?;
                let round = self
                    .round(request_id)
                    .ok_or_else(|| SessionError::UnknownRequest(request_id.clone()))?;
                if round.decision.is_some() {
                    return Err(SessionError::AlreadyDecided(request_id.clone()));
                }
                if let Action::Accept(i) = action {
                    let len = round.suggestion_set.suggestions.len();
                    if *i >= len {
                        return Err(SessionError::BadIndex { index: *i, len });
                    }
                }
                Ok(())
            }
            EventPayload::DraftEdited { .. } => active(),
            EventPayload::CaptionSubmitted { caption } => {
                active()?;
                let c = &self.task.constraints;
                let actual = caption_chars(caption);
                if actual < c.min_caption_chars {
                    return Err(SessionError::TooShort { actual, required: c.min_caption_chars });
                }
                if self.request_count < c.min_requests {
                    return Err(SessionError::TooFewRequests { actual: self.request_count, required: c.min_requests });
                }
                Ok(())
            }
            EventPayload::SurveySubmitted(survey) => {
                if self.state != SessionState::Submitted {
                    return Err(SessionError::NotSubmitted);
                }
                if self.survey.is_some() {
                    return Err(SessionError::SurveyAlreadySubmitted);
                }
                survey.validate()
            }
            EventPayload::SessionClosed { .. } => active(),
        }
    }

    /// Apply one event. On error the session is unchanged.
    pub fn apply(&mut self, ev: &InteractionEvent) -> Result<(), SessionError> {
        if ev.session_id != self.session_id {
            return Err(SessionError::InvalidEvent(format!(
                "event for {} applied to {}",
                ev.session_id, self.session_id
            )));
        }
        if ev.event_id <= self.last_event_id {
            return Err(SessionError::InvalidEvent(format!(
                "event id {} not after {}",
                ev.event_id, self.last_event_id
            )));
        }
        self.check(&ev.payload)?;
        match &ev.payload {
            EventPayload::SessionCreated { .. } => unreachable!("rejected by check"),
            EventPayload::SuggestionRequested { raw_draft, suggestion_set } => {
                self.request_count += 1;
                self.rounds.push(Round {
                    request_id: suggestion_set.request_id.clone(),
                    event_id: ev.event_id,
                    raw_draft: raw_draft.clone(),
                    suggestion_set: suggestion_set.clone(),
                    decision: None,
                    decision_event_id: None,
                });
            }
            EventPayload::DecisionMade { request_id, action } => {
                let round = self
                    .rounds
                    .iter_mut()
                    .find(|r| r.request_id == *request_id)
                    .expect("checked");
                if let Action::Accept(i) = action {
                    self.current_draft = round.suggestion_set.suggestions[*i].clone();
                    self.accepted_count += 1;
                }
                round.decision = Some(*action);
                round.decision_event_id = Some(ev.event_id);
            }
            EventPayload::DraftEdited { new_draft } => self.current_draft = new_draft.clone(),
            EventPayload::CaptionSubmitted { caption } => {
                self.state = SessionState::Submitted;
                self.current_draft = caption.clone();
                self.final_caption = Some(caption.clone());
            }
            EventPayload::SurveySubmitted(survey) => self.survey = Some(*survey),
            EventPayload::SessionClosed { reason, final_draft } => {
                self.state = SessionState::Closed;
                self.close_reason = Some(reason.clone());
                self.final_caption = Some(final_draft.clone());
            }
        }
        self.last_event_id = ev.event_id;
        self.last_activity_ms = self.last_activity_ms.max(ev.ts);
        Ok(())
    }
}

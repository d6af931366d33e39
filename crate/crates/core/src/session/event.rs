use serde::{Deserialize, Serialize};

use super::{SurveyResponse, Task};
use crate::generation::SuggestionSet;

/// Schema tag written as the first line of every event log.
pub const EVENT_SCHEMA: &str = "milrw-events/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accept(usize),
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum EventPayload {
    SessionCreated { task: Task, arm: String },
    SuggestionRequested { raw_draft: String, suggestion_set: SuggestionSet },
    DecisionMade { request_id: String, action: Action },
    DraftEdited { new_draft: String },
    CaptionSubmitted { caption: String },
    SurveySubmitted(SurveyResponse),
    SessionClosed { reason: String, final_draft: String },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::SessionCreated { .. } => "session_created",
            EventPayload::SuggestionRequested { .. } => "suggestion_requested",
            EventPayload::DecisionMade { .. } => "decision_made",
            EventPayload::DraftEdited { .. } => "draft_edited",
            EventPayload::CaptionSubmitted { .. } => "caption_submitted",
            EventPayload::SurveySubmitted(_) => "survey_submitted",
            EventPayload::SessionClosed { .. } => "session_closed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub event_id: u64,
    pub session_id: String,
    /// Wall-clock milliseconds; informational only, ordering is by `event_id`.
    pub ts: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl InteractionEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

pub fn header_line() -> String {
    serde_json::json!({ "schema": EVENT_SCHEMA }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shape() {
        let ev = InteractionEvent {
            event_id: 3,
            session_id: "s-000001".into(),
            ts: 17,
            payload: EventPayload::DecisionMade { request_id: "s-000001-r1".into(), action: Action::Accept(2) },
        };
        let line = ev.to_line();
        assert_eq!(
            line,
            r#"{"event_id":3,"session_id":"s-000001","ts":17,"type":"decision_made","payload":{"request_id":"s-000001-r1","action":{"accept":2}}}"#
        );
        let back: InteractionEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, ev);
        let reject = serde_json::to_string(&Action::Reject).unwrap();
        assert_eq!(reject, r#""reject""#);
        assert_eq!(header_line(), r#"{"schema":"milrw-events/1"}"#);
    }
}

//! HTTP routes. Every body is JSON; errors carry a stable machine code.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::body::Bytes;
use axum::{Json, Router};
use milrw_core::analytics::{render_text, ReportOptions, RougeNormalization};
use milrw_core::feedback::ExtractOptions;
use milrw_core::session::{Action, SurveyResponse};
use serde::Deserialize;
use serde_json::json;

use crate::error::ServiceError;
use crate::workbench::{FeedbackQuery, Workbench};

#[derive(Clone)]
pub struct AppState {
    pub workbench: Arc<Workbench>,
    pub admin_token: Option<String>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/suggest", post(suggest))
        .route("/sessions/{id}/decision", post(decide))
        .route("/sessions/{id}/submit", post(submit))
        .route("/sessions/{id}/survey", post(survey))
        .route("/admin/export/events", get(export_events))
        .route("/admin/export/feedback", get(export_feedback))
        .route("/admin/report", get(report))
        .with_state(state)
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    r.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

/// Run a workbench call off the async runtime; backends may block.
async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&Workbench) -> Result<T, ServiceError> + Send + 'static,
{
    let wb = state.workbench.clone();
    tokio::task::spawn_blocking(move || f(&wb))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

// The body is ignored, but reading it keeps the connection reusable.
async fn create_session(State(st): State<AppState>, _body: Bytes) -> Result<impl IntoResponse, ServiceError> {
    let view = blocking(&st, |wb| wb.create()).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(blocking(&st, move |wb| wb.view(&id)).await?))
}

#[derive(Deserialize)]
struct SuggestBody {
    raw_draft: String,
}

async fn suggest(
    State(st): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<SuggestBody>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let b = body(req)?;
    Ok(Json(blocking(&st, move |wb| wb.suggest(&id, &b.raw_draft)).await?))
}

#[derive(Deserialize)]
struct DecisionBody {
    request_id: String,
    action: String,
    #[serde(default)]
    index: Option<usize>,
}

async fn decide(
    State(st): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let b = body(req)?;
    let action = match (b.action.as_str(), b.index) {
        ("accept", Some(i)) => Action::Accept(i),
        ("accept", None) => return Err(ServiceError::BadRequest("accept needs an index".into())),
        ("reject", _) => Action::Reject,
        (other, _) => return Err(ServiceError::BadRequest(format!("unknown action {other:?}"))),
    };
    let draft = blocking(&st, move |wb| wb.decide(&id, &b.request_id, action)).await?;
    Ok(Json(json!({ "current_draft": draft })))
}

#[derive(Deserialize)]
struct SubmitBody {
    caption: String,
}

async fn submit(
    State(st): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<SubmitBody>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let b = body(req)?;
    blocking(&st, move |wb| wb.submit(&id, &b.caption)).await?;
    Ok(Json(json!({ "status": "submitted" })))
}

#[derive(Deserialize)]
struct SurveyBody {
    helpfulness: i64,
    grammaticality: i64,
    satisfaction: i64,
    self_skill: i64,
}

fn likert(name: &str, v: i64) -> Result<u8, ServiceError> {
    match u8::try_from(v) {
        Ok(x) if (1..=5).contains(&x) => Ok(x),
        _ => Err(milrw_core::session::SessionError::InvalidSurvey(format!("{name} must be in 1..=5, got {v}")).into()),
    }
}

async fn survey(
    State(st): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<SurveyBody>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let b = body(req)?;
    let survey = SurveyResponse {
        helpfulness: likert("helpfulness", b.helpfulness)?,
        grammaticality: likert("grammaticality", b.grammaticality)?,
        satisfaction: likert("satisfaction", b.satisfaction)?,
        self_skill: likert("self_skill", b.self_skill)?,
    };
    blocking(&st, move |wb| wb.survey(&id, survey)).await?;
    Ok(Json(json!({ "status": "recorded" })))
}

fn check_admin(st: &AppState, headers: &HeaderMap) -> Result<(), ServiceError> {
    let Some(expected) = st.admin_token.as_deref() else {
        return Err(ServiceError::Unauthorized);
    };
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let plain = headers.get("x-admin-token").and_then(|v| v.to_str().ok());
    match bearer.or(plain) {
        Some(t) if t == expected => Ok(()),
        _ => Err(ServiceError::Unauthorized),
    }
}

fn jsonl(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response()
}

async fn export_events(State(st): State<AppState>, headers: HeaderMap) -> Result<Response, ServiceError> {
    check_admin(&st, &headers)?;
    Ok(jsonl(blocking(&st, |wb| wb.export_events()).await?))
}

#[derive(Deserialize)]
struct FeedbackParams {
    ratio: Option<f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    siblings_as_rejects: bool,
    #[serde(default)]
    reject_all_shown: bool,
    #[serde(default)]
    include_closed: bool,
}

async fn export_feedback(
    State(st): State<AppState>,
    headers: HeaderMap,
    params: Result<Query<FeedbackParams>, QueryRejection>,
) -> Result<Response, ServiceError> {
    check_admin(&st, &headers)?;
    let Query(p) = params.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let q = FeedbackQuery {
        ratio: p.ratio,
        seed: p.seed,
        options: ExtractOptions {
            siblings_as_rejects: p.siblings_as_rejects,
            reject_all_shown: p.reject_all_shown,
            include_closed: p.include_closed,
        },
    };
    Ok(jsonl(blocking(&st, move |wb| Ok(wb.export_feedback(&q)?.to_jsonl())).await?))
}

#[derive(Deserialize)]
struct ReportParams {
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    rouge: Option<RougeNormalization>,
}

async fn report(
    State(st): State<AppState>,
    headers: HeaderMap,
    params: Result<Query<ReportParams>, QueryRejection>,
) -> Result<Response, ServiceError> {
    check_admin(&st, &headers)?;
    let Query(p) = params.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let opts = ReportOptions { rouge: p.rouge.unwrap_or_default(), ..Default::default() };
    let r = blocking(&st, move |wb| wb.report(&opts)).await?;
    Ok(match p.format.as_deref() {
        Some("text") => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], render_text(&r)).into_response(),
        None | Some("json") => {
            ([(header::CONTENT_TYPE, "application/json")], r.to_canonical_json()).into_response()
        }
        Some(other) => return Err(ServiceError::BadRequest(format!("unknown format {other:?}"))),
    })
}

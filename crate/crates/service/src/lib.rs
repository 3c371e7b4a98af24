//! HTTP service: runs cases through the pipeline, persists them in a
//! [`CaseStore`], and exposes contestation sessions over them.
//!
//! All routes live under `/v1`. Errors are JSON `{"code", "message"}` with a
//! 4xx status for bad input and unknown ids.

mod error;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use acal_core::backend::Purpose;
use acal_core::contestation::{
    argument_card, audit_to_jsonl, dashboard, open_session, ContestError, ContestationSession, ContestationType,
    Edit, EditOp, Proposal,
};
use acal_core::qbaf::{NodeId, QbafGraph, StrengthMap};
use acal_core::store::CaseStore;
use acal_core::{CaseRecord, Decision, Pipeline, PipelineConfig, TaskInput};

pub use error::{ApiError, ErrorBody};

/// Header naming who made an edit.
pub const ACTOR_HEADER: &str = "x-acal-actor";
const DEFAULT_ACTOR: &str = "anonymous";

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    pipeline: Pipeline,
    store: CaseStore,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl AppState {
    /// `pipeline` supplies the default configuration, corpus and backends
    /// for every case and session.
    pub fn new(pipeline: Pipeline, store: CaseStore) -> Self {
        AppState {
            pipeline,
            store,
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &CaseStore {
        &self.store
    }

    fn case_lock(&self, case_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(case_id.to_string()).or_default().clone()
    }

    /// Loads a session, applies `f`, and saves the result. Writes to one
    /// case are serialized; a failed `f` leaves the stored session alone.
    fn mutate_session<T>(
        &self,
        case_id: &str,
        session_id: &str,
        f: impl FnOnce(&mut ContestationSession, &Pipeline) -> ApiResult<T>,
    ) -> ApiResult<T> {
        let lock = self.case_lock(case_id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut session = self.store.load_session(case_id, session_id)?;
        let out = f(&mut session, &self.pipeline)?;
        self.store.save_session(&session)?;
        Ok(out)
    }
}

pub fn router(state: AppState) -> Router {
    let session = "/v1/cases/{case_id}/sessions/{session_id}";
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/cases", get(list_cases).post(create_case))
        .route("/v1/cases/{case_id}", get(get_case))
        .route("/v1/cases/{case_id}/graph", get(get_graph))
        .route("/v1/cases/{case_id}/strengths", get(get_strengths))
        .route("/v1/cases/{case_id}/decision", get(get_decision))
        .route("/v1/cases/{case_id}/dashboard", get(get_dashboard))
        .route("/v1/cases/{case_id}/cards/{node_id}", get(get_card))
        .route("/v1/cases/{case_id}/sessions", get(list_sessions).post(create_session))
        .route(session, get(get_session))
        .route(&format!("{session}/edits"), post(post_edit))
        .route(&format!("{session}/preview"), post(post_preview))
        .route(&format!("{session}/contest"), post(post_contest))
        .route(&format!("{session}/proposals"), get(get_proposals))
        .route(&format!("{session}/proposals/{{proposal_id}}/accept"), post(accept_proposal))
        .route(&format!("{session}/proposals/{{proposal_id}}/reject"), post(reject_proposal))
        .route(&format!("{session}/audit"), get(get_audit))
        .route(&format!("{session}/decision"), get(get_session_decision))
        .route(&format!("{session}/cards/{{node_id}}"), get(get_session_card))
        .with_state(Arc::new(state))
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn actor(headers: &HeaderMap) -> String {
    headers
        .get(ACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .unwrap_or(DEFAULT_ACTOR)
        .to_string()
}

fn node_lookup(e: ContestError) -> ApiError {
    match e {
        ContestError::UnknownNode(_) => ApiError::new(StatusCode::NOT_FOUND, "NODE_NOT_FOUND", e.to_string()),
        other => other.into(),
    }
}

/// Applies a JSON object of overrides on top of the base config. Backend
/// selection is fixed by the server.
fn merged_config(base: &PipelineConfig, overrides: Option<Value>) -> ApiResult<PipelineConfig> {
    let Some(overrides) = overrides else {
        return Ok(base.clone());
    };
    let Value::Object(overrides) = overrides else {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "INVALID_CONFIG", "config must be an object"));
    };
    if overrides.contains_key("backends") {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "INVALID_CONFIG",
            "backends cannot be overridden per case",
        ));
    }
    let mut doc = serde_json::to_value(base).map_err(|e| ApiError::internal(e.to_string()))?;
    merge(&mut doc, Value::Object(overrides));
    serde_json::from_value(doc).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "INVALID_CONFIG", e.to_string()))
}

fn merge(into: &mut Value, from: Value) {
    match (into, from) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in b {
                merge(a.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

async fn health() -> Json<Value> {
    Json(serde_json::json!({"status": "ok"}))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateCase {
    pub task: TaskInput,
    #[serde(default)]
    pub config: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CaseCreated {
    pub case_id: String,
    /// False when an identical case was already stored.
    pub created: bool,
    pub decision: Decision,
}

async fn create_case(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateCase>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    blocking(move || {
        let config = merged_config(state.pipeline.config(), body.config)?;
        let record = state.pipeline.reconfigured(config)?.run(&body.task)?;
        let lock = state.case_lock(&record.case_id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let (status, created, decision) = if state.store.contains(&record.case_id) {
            let stored = state.store.get_record(&record.case_id)?;
            (StatusCode::OK, false, stored.decision)
        } else {
            state.store.put_record(&record)?;
            (StatusCode::CREATED, true, record.decision.clone())
        };
        let body = CaseCreated {
            case_id: record.case_id,
            created,
            decision,
        };
        Ok((status, Json(body)).into_response())
    })
    .await
}

async fn list_cases(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<String>>> {
    blocking(move || Ok(Json(state.store.list_cases()?))).await
}

async fn load_record(state: Arc<AppState>, case_id: String) -> ApiResult<CaseRecord> {
    blocking(move || Ok(state.store.get_record(&case_id)?)).await
}

async fn get_case(State(state): State<Arc<AppState>>, Path(case_id): Path<String>) -> ApiResult<Json<CaseRecord>> {
    Ok(Json(load_record(state, case_id).await?))
}

async fn get_graph(State(state): State<Arc<AppState>>, Path(case_id): Path<String>) -> ApiResult<Json<QbafGraph>> {
    Ok(Json(load_record(state, case_id).await?.graph))
}

async fn get_strengths(
    State(state): State<Arc<AppState>>,
    Path(case_id): Path<String>,
) -> ApiResult<Json<StrengthMap>> {
    Ok(Json(load_record(state, case_id).await?.strengths))
}

async fn get_decision(State(state): State<Arc<AppState>>, Path(case_id): Path<String>) -> ApiResult<Json<Decision>> {
    Ok(Json(load_record(state, case_id).await?.decision))
}

async fn get_dashboard(State(state): State<Arc<AppState>>, Path(case_id): Path<String>) -> ApiResult<Response> {
    let record = load_record(state, case_id).await?;
    Ok(Json(dashboard(&record)).into_response())
}

async fn get_card(
    State(state): State<Arc<AppState>>,
    Path((case_id, node_id)): Path<(String, String)>,
) -> ApiResult<Response> {
    let record = load_record(state, case_id).await?;
    let card = argument_card(&record, &NodeId::new(node_id)).map_err(node_lookup)?;
    Ok(Json(card).into_response())
}

/// Current state of a session.
#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub case_id: String,
    pub graph: QbafGraph,
    pub strengths: StrengthMap,
    pub decision: Decision,
    pub base_decision: Decision,
    pub review_required: bool,
    pub removed: Vec<NodeId>,
    pub accepted: Vec<NodeId>,
    pub audit_len: usize,
    pub pending_proposals: usize,
}

impl SessionView {
    fn of(s: &ContestationSession) -> Self {
        SessionView {
            session_id: s.session_id().to_string(),
            case_id: s.case_id().to_string(),
            graph: s.graph().clone(),
            strengths: s.strengths().clone(),
            decision: s.decision().clone(),
            base_decision: s.base_decision().clone(),
            review_required: s.review_required(),
            removed: s.removed().iter().cloned().collect(),
            accepted: s.accepted().iter().cloned().collect(),
            audit_len: s.audit().len(),
            pending_proposals: s.pending().len(),
        }
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Path(case_id): Path<String>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    blocking(move || {
        let lock = state.case_lock(&case_id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let record = state.store.get_record(&case_id)?;
        let session = open_session(&record, state.store.next_session_id(&case_id)?);
        state.store.save_session(&session)?;
        Ok((StatusCode::CREATED, Json(SessionView::of(&session))))
    })
    .await
}

async fn list_sessions(
    State(state): State<Arc<AppState>>,
    Path(case_id): Path<String>,
) -> ApiResult<Json<Vec<String>>> {
    blocking(move || Ok(Json(state.store.list_sessions(&case_id)?))).await
}

async fn load_session(state: Arc<AppState>, case_id: String, session_id: String) -> ApiResult<ContestationSession> {
    blocking(move || Ok(state.store.load_session(&case_id, &session_id)?)).await
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id)): Path<(String, String)>,
) -> ApiResult<Json<SessionView>> {
    let session = load_session(state, case_id, session_id).await?;
    Ok(Json(SessionView::of(&session)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditBody {
    pub contestation: ContestationType,
    pub op: EditOp,
}

async fn post_edit(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id)): Path<(String, String)>,
    headers: HeaderMap,
    body: Result<Json<EditBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    let actor = actor(&headers);
    blocking(move || {
        state.mutate_session(&case_id, &session_id, |session, pipeline| {
            let edit = Edit::new(actor, body.contestation, body.op);
            let entry = session.apply_edit(edit, pipeline.backends().get(Purpose::Judge))?;
            Ok((StatusCode::CREATED, Json(entry)).into_response())
        })
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewBody {
    pub op: EditOp,
}

/// Evaluates an edit on a scratch copy; nothing is stored.
async fn post_preview(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id)): Path<(String, String)>,
    body: Result<Json<PreviewBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    blocking(move || {
        let session = state.store.load_session(&case_id, &session_id)?;
        let preview = session.preview(body.op, state.pipeline.backends().get(Purpose::Judge))?;
        Ok(Json(preview).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContestBody {
    pub contestation: ContestationType,
    pub claim: String,
    #[serde(default)]
    pub materials: Vec<String>,
}

async fn post_contest(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id)): Path<(String, String)>,
    body: Result<Json<ContestBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    if body.claim.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "CONTEST_EMPTY_CLAIM", "claim is empty"));
    }
    blocking(move || {
        state.mutate_session(&case_id, &session_id, |session, pipeline| {
            let outcome = session.run_contestation_prompt(
                body.contestation,
                &body.claim,
                &body.materials,
                pipeline.backends().get(Purpose::Contest),
            );
            Ok(Json(outcome).into_response())
        })
    })
    .await
}

async fn get_proposals(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id)): Path<(String, String)>,
) -> ApiResult<Json<Vec<Proposal>>> {
    let session = load_session(state, case_id, session_id).await?;
    Ok(Json(session.pending().into_iter().cloned().collect()))
}

fn proposal_id(raw: &str) -> ApiResult<u64> {
    raw.parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "PROPOSAL_UNKNOWN", format!("unknown proposal {raw}")))
}

async fn accept_proposal(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id, raw)): Path<(String, String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let id = proposal_id(&raw)?;
    let actor = actor(&headers);
    blocking(move || {
        state.mutate_session(&case_id, &session_id, |session, pipeline| {
            let entry = session.accept_proposal(id, &actor, pipeline.backends().get(Purpose::Judge))?;
            Ok((StatusCode::CREATED, Json(entry)).into_response())
        })
    })
    .await
}

async fn reject_proposal(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id, raw)): Path<(String, String, String)>,
) -> ApiResult<Json<Proposal>> {
    let id = proposal_id(&raw)?;
    blocking(move || {
        state.mutate_session(&case_id, &session_id, |session, _| {
            session.reject_proposal(id)?;
            let p = session.proposals().iter().find(|p| p.id == id).cloned();
            p.map(Json).ok_or_else(|| ApiError::internal("rejected proposal vanished"))
        })
    })
    .await
}

/// JSON array by default; JSON Lines when the client accepts
/// `application/x-ndjson` or `application/jsonl`.
async fn get_audit(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let session = load_session(state, case_id, session_id).await?;
    let wants_lines = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("application/x-ndjson") || v.contains("application/jsonl"));
    if wants_lines {
        let body = audit_to_jsonl(session.audit());
        Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
    } else {
        Ok(Json(session.audit().to_vec()).into_response())
    }
}

/// The session's decision next to the one it started from.
#[derive(Debug, Serialize, Deserialize)]
pub struct SessionDecision {
    pub decision: Decision,
    pub base_decision: Decision,
    pub claim_strength: f64,
    pub base_claim_strength: f64,
    pub changed: bool,
    pub review_required: bool,
}

async fn get_session_decision(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id)): Path<(String, String)>,
) -> ApiResult<Json<SessionDecision>> {
    let s = load_session(state, case_id, session_id).await?;
    Ok(Json(SessionDecision {
        decision: s.decision().clone(),
        base_decision: s.base_decision().clone(),
        claim_strength: s.strengths().claim(),
        base_claim_strength: s.base_claim_strength(),
        changed: s.decision().answer != s.base_decision().answer,
        review_required: s.review_required(),
    }))
}

async fn get_session_card(
    State(state): State<Arc<AppState>>,
    Path((case_id, session_id, node_id)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    let session = load_session(state, case_id, session_id).await?;
    let card = session.argument_card(&NodeId::new(node_id)).map_err(node_lookup)?;
    Ok(Json(card).into_response())
}

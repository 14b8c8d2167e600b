use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use loopsift_core::corpus::{LabelStatus, NewExample, QueryFilter, RejectReason, StoreError};
use loopsift_core::eval::{emit_report, threshold_band_report, ReportFormat};
use loopsift_core::hitl::queue::review_order;
use loopsift_core::hitl::QueueItem;
use loopsift_core::scorer::score_checked;
use loopsift_core::{Annotation, AnnotationKind, Example, Label, LabelState, ScoreInput, TargetGroup};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::info;

use crate::error::ApiError;
use crate::state::AppState;

pub const MAX_QUEUE_PAGE: usize = 1000;
pub const DEFAULT_QUEUE_PAGE: usize = 50;
pub const MAX_SCORE_BATCH: usize = 1000;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/ingest", post(ingest))
        .route("/queue", get(queue))
        .route("/items/{id}", get(item))
        .route("/items/{id}/review", post(review))
        .route("/retrain", post(retrain))
        .route("/models", get(models))
        .route("/models/{version}/activate", post(activate))
        .route("/score", post(score))
        .route("/reports/threshold", get(threshold_report))
        .route("/reports/metrics", get(metrics_report))
        .route("/status", get(status))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/api/v1/health", get(health))
        .nest("/api/v1", api)
        .with_state(state)
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == state.config.token);
    if ok {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "UNAUTHENTICATED", "missing or wrong bearer token").into_response()
    }
}

/// Runs blocking work (store locks, scoring, training setup) off the async
/// workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// Accepts a JSON array or JSON lines. Field paths in errors look like
/// `[2].created_at`.
pub fn parse_examples(body: &[u8]) -> ApiResult<Vec<NewExample>> {
    let text = std::str::from_utf8(body).map_err(|_| ApiError::bad_request("MALFORMED", "body is not UTF-8"))?;
    let trimmed = text.trim_start();
    let examples: Vec<NewExample> = if trimmed.starts_with('[') {
        let de = &mut serde_json::Deserializer::from_str(trimmed);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ApiError::bad_request("MALFORMED", e.inner().to_string()).field(path)
        })?
    } else {
        let mut out = Vec::new();
        for line in trimmed.lines().filter(|l| !l.trim().is_empty()) {
            let i = out.len();
            let de = &mut serde_json::Deserializer::from_str(line);
            let e: NewExample = serde_path_to_error::deserialize(de).map_err(|e| {
                let inner = e.path().to_string();
                let path = if inner == "." { format!("[{i}]") } else { format!("[{i}].{inner}") };
                ApiError::bad_request("MALFORMED", e.inner().to_string()).field(path)
            })?;
            out.push(e);
        }
        out
    };
    if examples.is_empty() {
        return Err(ApiError::bad_request("MALFORMED", "no examples in body"));
    }
    for (i, e) in examples.iter().enumerate() {
        let stamps = [("created_at", Some(&e.created_at)), ("ingested_at", e.ingested_at.as_ref())];
        for (name, value) in stamps {
            if let Some(v) = value {
                if chrono::DateTime::parse_from_rfc3339(v).is_err() {
                    return Err(ApiError::bad_request("MALFORMED", format!("not an RFC 3339 timestamp: {v:?}"))
                        .field(format!("[{i}].{name}")));
                }
            }
        }
    }
    Ok(examples)
}

async fn ingest(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let batch = parse_examples(&body)?;
    blocking(move || {
        let n = batch.len();
        let report = state.store().ingest_examples(batch, Utc::now())?;
        info!(event = "ingested", submitted = n, accepted = report.accepted, rejected = report.rejected.len());
        if report.accepted == 0 && report.rejected.iter().all(|r| r.reason == RejectReason::DuplicateId) {
            return Err(ApiError::conflict("ALL_DUPLICATES", "every submitted id already exists").detail(&report));
        }
        Ok(Json(report).into_response())
    })
    .await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub example: Example,
    pub weak_probability: f64,
    pub weak_label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    /// Items passing the filter, before paging.
    pub total: usize,
    pub offset: usize,
    pub items: Vec<QueueEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParams {
    pub limit: usize,
    pub offset: usize,
    pub min_prob: f64,
}

pub fn parse_queue_params(raw: &HashMap<String, String>) -> ApiResult<QueueParams> {
    let mut p = QueueParams { limit: DEFAULT_QUEUE_PAGE, offset: 0, min_prob: 0.0 };
    for (k, v) in raw {
        match k.as_str() {
            "limit" => {
                p.limit = v.parse().map_err(|_| ApiError::unprocessable(format!("limit must be an integer, got {v:?}")).field("limit"))?;
                if !(1..=MAX_QUEUE_PAGE).contains(&p.limit) {
                    return Err(ApiError::unprocessable(format!("limit must be in 1..={MAX_QUEUE_PAGE}")).field("limit"));
                }
            }
            "offset" => {
                p.offset = v.parse().map_err(|_| ApiError::unprocessable(format!("offset must be an integer, got {v:?}")).field("offset"))?;
            }
            "min_prob" => {
                p.min_prob = v.parse().map_err(|_| ApiError::unprocessable(format!("min_prob must be a number, got {v:?}")).field("min_prob"))?;
                if !(0.0..=1.0).contains(&p.min_prob) {
                    return Err(ApiError::unprocessable("min_prob must be in [0, 1]").field("min_prob"));
                }
            }
            other => return Err(ApiError::unprocessable(format!("unknown parameter {other:?}")).field(other.to_string())),
        }
    }
    Ok(p)
}

/// Unreviewed weak-labelled items, highest probability first, ties by id.
pub fn review_queue(store: &loopsift_core::CorpusStore, params: QueueParams) -> Result<QueuePage, StoreError> {
    let filter = QueryFilter { label_status: Some(LabelStatus::WeakOnly), ..QueryFilter::default() };
    let mut rows: Vec<(Example, LabelState)> = store
        .query(&filter)?
        .into_iter()
        .filter(|(_, s)| s.weak_probability.is_some_and(|p| p >= params.min_prob))
        .collect();
    let key = |(e, s): &(Example, LabelState)| QueueItem { example_id: e.id.clone(), weak_probability: s.weak_probability.unwrap_or(0.0) };
    rows.sort_by(|a, b| review_order(&key(a), &key(b)));
    let total = rows.len();
    let items = rows
        .into_iter()
        .skip(params.offset)
        .take(params.limit)
        .map(|(example, s)| {
            let p = s.weak_probability.unwrap_or(0.0);
            QueueEntry { example, weak_probability: p, weak_label: s.weak_label.unwrap_or(Label::from_bool(p >= 0.5)) }
        })
        .collect();
    Ok(QueuePage { total, offset: params.offset, items })
}

async fn queue(State(state): State<Arc<AppState>>, Query(raw): Query<HashMap<String, String>>) -> ApiResult<Json<QueuePage>> {
    let params = parse_queue_params(&raw)?;
    blocking(move || Ok(Json(review_queue(&state.store(), params)?))).await
}

async fn item(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    blocking(move || {
        let store = state.store();
        let example = store.example(&id).ok_or_else(|| ApiError::not_found(format!("unknown example {id}")))?;
        Ok(Json(json!({
            "example": example,
            "label_state": store.label_state(&id),
            "annotations": store.annotations_for(&id),
        })))
    })
    .await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewRequest {
    pub label: Label,
    #[serde(default)]
    pub toxic: bool,
    #[serde(default)]
    pub targets: BTreeSet<TargetGroup>,
    pub annotator_id: String,
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    match body {
        Ok(Json(v)) => Ok(v),
        Err(JsonRejection::JsonDataError(e)) => Err(ApiError::unprocessable(e.body_text())),
        Err(e) => Err(ApiError::bad_request("MALFORMED", e.body_text())),
    }
}

async fn review(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ReviewRequest>, JsonRejection>,
) -> ApiResult<Json<LabelState>> {
    let req = json_body(body)?;
    if req.annotator_id.trim().is_empty() {
        return Err(ApiError::unprocessable("annotator_id must not be empty").field("annotator_id"));
    }
    blocking(move || {
        let label_state = {
            let mut store = state.store();
            if store.example(&id).is_none() {
                return Err(ApiError::not_found(format!("unknown example {id}")));
            }
            store.append_annotation(Annotation {
                example_id: id.clone(),
                annotator_id: req.annotator_id.clone(),
                label: req.label,
                toxic: req.toxic,
                targets: req.targets,
                kind: AnnotationKind::Strong,
                created_at: Utc::now(),
            })?;
            match store.resolve(&id) {
                Ok(s) => s,
                // tie: stays unresolved until another vote arrives
                Err(StoreError::Resolve(_)) => store.label_state(&id),
                Err(e) => return Err(e.into()),
            }
        };
        state.note_review(&id);
        info!(event = "reviewed", example_id = %id, annotator = %req.annotator_id, strong_label = ?label_state.strong_label);
        Ok(Json(label_state))
    })
    .await
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainRequest {
    #[serde(default)]
    pub force: bool,
}

async fn retrain(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: RetrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RetrainRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(e.to_string()))?
    };
    blocking(move || {
        let start = state.start_retrain(req.force)?;
        let code = if start.started { StatusCode::ACCEPTED } else { StatusCode::OK };
        Ok((code, Json(start)).into_response())
    })
    .await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelList {
    pub active: Option<String>,
    pub entries: Vec<crate::registry::ModelRegistryEntry>,
}

async fn models(State(state): State<Arc<AppState>>) -> Json<ModelList> {
    let reg = state.registry();
    Json(ModelList { active: reg.active_version().map(str::to_string), entries: reg.entries().to_vec() })
}

async fn activate(State(state): State<Arc<AppState>>, Path(version): Path<String>) -> ApiResult<Response> {
    blocking(move || Ok(Json(state.activate(&version)?).into_response())).await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreBody {
    pub items: Vec<ScoreInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReply {
    pub model_version: String,
    pub probabilities: Vec<f64>,
}

async fn score(State(state): State<Arc<AppState>>, body: Result<Json<ScoreBody>, JsonRejection>) -> ApiResult<Json<ScoreReply>> {
    let req = json_body(body)?;
    if req.items.is_empty() || req.items.len() > MAX_SCORE_BATCH {
        return Err(ApiError::unprocessable(format!("items must hold 1..={MAX_SCORE_BATCH} entries")).field("items"));
    }
    // one model for the whole batch
    let model = state.active_model().ok_or_else(no_model)?;
    blocking(move || {
        let probabilities = score_checked(&*model.scorer, &req.items)
            .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "SCORER_UNAVAILABLE", e.to_string()))?;
        Ok(Json(ScoreReply { model_version: model.entry.version.clone(), probabilities }))
    })
    .await
}

fn no_model() -> ApiError {
    ApiError::conflict("NO_MODEL", "no model has been trained or activated yet")
}

/// Reviewed items with a positive weak prediction, as (probability, strong label).
pub fn checked_items(store: &loopsift_core::CorpusStore) -> Vec<(f64, Label)> {
    store
        .examples()
        .filter_map(|e| {
            let s = store.label_state(&e.id);
            match (s.weak_probability, s.strong_label) {
                (Some(p), Some(l)) if p >= 0.5 => Some((p, l)),
                _ => None,
            }
        })
        .collect()
}

async fn threshold_report(State(state): State<Arc<AppState>>, Query(raw): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let format = match raw.get("format") {
        None => ReportFormat::Json,
        Some(f) => f.parse().map_err(|_| ApiError::unprocessable(format!("unknown format {f:?}")).field("format"))?,
    };
    if state.active_model().is_none() {
        return Err(no_model());
    }
    blocking(move || {
        let checked = checked_items(&state.store());
        if checked.is_empty() {
            return Err(ApiError::conflict("NO_CHECKED_ITEMS", "no reviewed items with a positive prediction"));
        }
        let report = threshold_band_report(&checked).map_err(|e| ApiError::internal(e.to_string()))?;
        let content_type = match format {
            ReportFormat::Json => "application/json",
            ReportFormat::Csv => "text/csv",
            ReportFormat::Markdown => "text/markdown",
        };
        Ok(([(header::CONTENT_TYPE, content_type)], emit_report(&report, format)).into_response())
    })
    .await
}

async fn metrics_report(State(state): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    let active = state.active_model().ok_or_else(no_model)?;
    let reg = state.registry();
    let history: Vec<_> = reg
        .entries()
        .iter()
        .map(|e| json!({ "version": e.version, "kind": e.kind, "snapshot": e.trained_on_snapshot, "metrics": e.metrics_at_train }))
        .collect();
    Ok(Json(json!({ "active": active.entry, "history": history })))
}

async fn status(State(state): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    blocking(move || {
        let now = Utc::now();
        let trigger = state.trigger_state();
        let decision = state.trigger_decision(now);
        let counts = {
            let store = state.store();
            let (mut weak, mut strong) = (0, 0);
            for e in store.examples() {
                let s = store.label_state(&e.id);
                if s.strong_label.is_some() {
                    strong += 1;
                } else if s.weak_probability.is_some() {
                    weak += 1;
                }
            }
            json!({ "examples": store.len(), "weak_only": weak, "strong": strong, "snapshots": store.snapshots().len() })
        };
        Ok(Json(json!({
            "active_model": state.active_model().map(|m| m.entry.clone()),
            "retrain": state.retrain_status(),
            "trigger": {
                "policy": state.config.policy,
                "last_retrain_at": trigger.last_retrain_at,
                "elapsed_secs": trigger.last_retrain_at.map(|t| (now - t).num_seconds()),
                "reviewed_since": trigger.reviewed_since.len(),
                "decision": decision,
            },
            "counts": counts,
        })))
    })
    .await
}

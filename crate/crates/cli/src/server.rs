//! Loopback HTTP API over one annotation session.

use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use obsolens_core::corpus::Decade;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::RwLock;
use tower_http::services::ServeDir;

use crate::error::CliError;
use crate::session::{Label, SessionError, SessionStore, TaskStatus};

pub type SharedStore = Arc<RwLock<SessionStore>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

pub fn router(store: SharedStore, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", get(session))
        .route("/api/tasks", get(tasks))
        .route("/api/tasks/{id}", get(task))
        .route("/api/annotations", post(annotate))
        .route("/api/estimate", get(estimate))
        .route("/api/progress", get(progress))
        .with_state(store);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn session(State(store): State<SharedStore>) -> ApiResult {
    let s = store.read().await;
    Ok(Json(json!({
        "session": s.header(),
        "progress": s.progress(),
        "unclear_policy": "unclear labels are excluded from both k and n",
    })))
}

#[derive(Deserialize)]
struct TaskFilter {
    status: Option<String>,
}

async fn tasks(State(store): State<SharedStore>, Query(filter): Query<TaskFilter>) -> ApiResult {
    let status = match filter.status.as_deref() {
        None | Some("") | Some("all") => None,
        Some("pending") => Some(TaskStatus::Pending),
        Some("labeled") => Some(TaskStatus::Labeled),
        Some(other) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("unknown status `{other}` (expected pending or labeled)"),
            ))
        }
    };
    let s = store.read().await;
    Ok(Json(json!(s.tasks(status))))
}

async fn task(State(store): State<SharedStore>, Path(id): Path<String>) -> ApiResult {
    let s = store.read().await;
    match s.task(&id) {
        Some(t) => Ok(Json(json!(t))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no task {id}"))),
    }
}

/// Body fields are checked by hand so a bad label gets a 400 with a reason.
async fn annotate(State(store): State<SharedStore>, body: Result<Json<Value>, JsonRejection>) -> ApiResult {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let field = |k: &str| body.get(k).and_then(Value::as_str);
    let sample_id = field("sample_id").ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing sample_id"))?;
    let label: Label = field("label")
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing label"))?
        .parse()
        .map_err(|e: SessionError| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let annotator = field("annotator").unwrap_or("anonymous");
    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let mut s = store.write().await;
    match s.record(sample_id, label, annotator, timestamp) {
        Ok(rec) => Ok(Json(json!(rec))),
        Err(e @ SessionError::UnknownTask(_)) => Err(ApiError::new(StatusCode::CONFLICT, e.to_string())),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

#[derive(Deserialize)]
struct EstimateQuery {
    decade: Option<String>,
}

async fn estimate(State(store): State<SharedStore>, Query(q): Query<EstimateQuery>) -> ApiResult {
    let s = store.read().await;
    let Some(raw) = q.decade else {
        return Ok(Json(json!(s.estimates())));
    };
    let decade = raw
        .parse::<i32>()
        .ok()
        .and_then(Decade::new)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("`{raw}` is not a decade start year")))?;
    match s.estimate(decade) {
        Some(e) => Ok(Json(json!(e))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("decade {decade} is not in this session"))),
    }
}

async fn progress(State(store): State<SharedStore>) -> ApiResult {
    Ok(Json(json!(store.read().await.progress())))
}

/// Binds 127.0.0.1:`port` (0 picks a free port).
pub async fn bind(port: u16) -> Result<TcpListener, CliError> {
    TcpListener::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, port)))
        .await
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => CliError::PortInUse(port),
            _ => CliError::Internal(e.to_string()),
        })
}

pub async fn serve(
    listener: TcpListener,
    store: SharedStore,
    assets: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), CliError> {
    axum::serve(listener, router(store, assets))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| CliError::Internal(e.to_string()))
}

//! Local HTTP service: human bridge endpoints, run reports and the static
//! console assets.
//!
//! | Method | Path | Body / reply |
//! |---|---|---|
//! | GET | `/sessions` | list of `{session_id, status, step_index}` |
//! | GET | `/session/{id}/step` | `{step_index, prompt_text, frame_png_base64, status}` |
//! | POST | `/session/{id}/action` | `{direction, step_index?}` → `{result: accepted\|stale\|done}` |
//! | GET | `/runs/{id}/report?levels=0,2&score=avg` | report JSON |

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::agents::{BridgeError, HumanBridge, PostResult, SessionStatus, StepView};
use crate::geometry::Action;
use crate::metrics::ScoreField;
use crate::prompt::Level;
use crate::report::{make_report, read_records, Report, ReportError};
use crate::run::RECORDS_FILE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Directory holding one subdirectory per run.
    pub runs_dir: PathBuf,
    /// Built console assets, served at `/`.
    pub console_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8765)),
            runs_dir: PathBuf::from("runs"),
            console_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("service stopped: {0}")]
    Serve(#[source] std::io::Error),
}

#[derive(Clone)]
struct AppState {
    bridge: Arc<HumanBridge>,
    runs_dir: Arc<PathBuf>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<BridgeError> for ApiError {
    fn from(e: BridgeError) -> Self {
        ApiError(StatusCode::NOT_FOUND, e.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub status: SessionStatus,
    pub step_index: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionBody {
    pub direction: String,
    #[serde(default)]
    pub step_index: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionReply {
    pub result: PostResult,
}

#[derive(Debug, Default, Deserialize)]
struct ReportQuery {
    levels: Option<String>,
    score: Option<ScoreField>,
}

async fn list_sessions(State(st): State<AppState>) -> Json<Vec<SessionInfo>> {
    let infos = st
        .bridge
        .session_ids()
        .into_iter()
        .filter_map(|id| st.bridge.step_view(&id).ok())
        .map(|v| SessionInfo {
            session_id: v.session_id,
            status: v.status,
            step_index: v.step_index,
        })
        .collect();
    Json(infos)
}

async fn get_step(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<StepView>, ApiError> {
    Ok(Json(st.bridge.step_view(&id)?))
}

async fn post_action(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ActionBody>,
) -> Result<(StatusCode, Json<ActionReply>), ApiError> {
    let action = Action::from_str(&body.direction)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let result = st.bridge.post_action(&id, body.step_index, action)?;
    let code = match result {
        PostResult::Accepted => StatusCode::OK,
        PostResult::Stale | PostResult::Done => StatusCode::CONFLICT,
    };
    Ok((code, Json(ActionReply { result })))
}

fn parse_levels(s: &str) -> Result<Vec<Level>, ApiError> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .trim_start_matches(['L', 'l'])
                .parse::<u8>()
                .ok()
                .and_then(Level::from_index)
                .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, format!("bad level {t:?}")))
        })
        .collect()
}

async fn run_report(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> Result<Json<Report>, ApiError> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\']) {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            format!("bad run id {id:?}"),
        ));
    }
    let levels = q
        .levels
        .as_deref()
        .map(parse_levels)
        .transpose()?
        .unwrap_or_default();
    let path = st.runs_dir.join(&id).join(RECORDS_FILE);
    let records = read_records(&path).map_err(|e| match e {
        ReportError::Io { .. } => ApiError(StatusCode::NOT_FOUND, format!("run {id} not found")),
        e => ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    })?;
    let report = make_report(&records, &levels, q.score.unwrap_or_default())
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Json(report))
}

pub fn router(bridge: Arc<HumanBridge>, runs_dir: PathBuf, console_dir: Option<PathBuf>) -> Router {
    let state = AppState {
        bridge,
        runs_dir: Arc::new(runs_dir),
    };
    let api = Router::new()
        .route("/sessions", get(list_sessions))
        .route("/session/{id}/step", get(get_step))
        .route("/session/{id}/action", post(post_action))
        .route("/runs/{id}/report", get(run_report))
        .with_state(state);
    match console_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// A bound, not yet running, service.
pub struct Service {
    listener: tokio::net::TcpListener,
    router: Router,
}

impl Service {
    pub async fn bind(cfg: &ServiceConfig, bridge: Arc<HumanBridge>) -> Result<Self, ServiceError> {
        let listener = tokio::net::TcpListener::bind(cfg.bind)
            .await
            .map_err(|source| ServiceError::Bind {
                addr: cfg.bind,
                source,
            })?;
        Ok(Self {
            listener,
            router: router(bridge, cfg.runs_dir.clone(), cfg.console_dir.clone()),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    pub async fn run(self) -> Result<(), ServiceError> {
        axum::serve(self.listener, self.router)
            .await
            .map_err(ServiceError::Serve)
    }

    pub async fn run_until(
        self,
        shutdown: impl Future<Output = ()> + Send + 'static,
    ) -> Result<(), ServiceError> {
        axum::serve(self.listener, self.router)
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(ServiceError::Serve)
    }
}

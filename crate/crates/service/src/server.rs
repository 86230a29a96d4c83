use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::future::Future;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gazealign_core::formats::{
    combined_csv_bytes, validate_key_component, write_jsonl_line, FormatError, GazePoint,
    SessionDescriptor, SessionDir, SessionStatus,
};
use gazealign_core::{
    quality, CalibrationEvent, CombinedRecord, Event, SessionBuffer, SyncConfig, TransformState,
    ViewportGeometry,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;

const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("data directory {path} is not writable: {source}")]
    DataDir {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] gazealign_core::sync::SyncError),
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Body of `POST /v1/session`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenRequest {
    pub pid: String,
    pub task: String,
    pub geom: ViewportGeometry,
}

/// Response to an event batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchResponse {
    pub accepted: u64,
    pub quarantined: u64,
    pub finalized: u64,
}

struct StreamWriters {
    gaze: BufWriter<File>,
    transform: BufWriter<File>,
    events: BufWriter<File>,
}

impl StreamWriters {
    fn create(dir: &SessionDir) -> std::io::Result<Self> {
        let open = |p: PathBuf| {
            OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(p)
                .map(BufWriter::new)
        };
        Ok(Self {
            gaze: open(dir.gaze_path())?,
            transform: open(dir.transform_path())?,
            events: open(dir.events_path())?,
        })
    }
}

struct OpenSession {
    descriptor: SessionDescriptor,
    dir: SessionDir,
    buffer: SessionBuffer,
    records: Vec<CombinedRecord>,
    writers: StreamWriters,
}

enum Slot {
    Open(Box<OpenSession>),
    Closed,
}

type SessionMap = HashMap<(String, String), Arc<Mutex<Slot>>>;

struct AppState {
    data_dir: PathBuf,
    cfg: SyncConfig,
    sessions: Mutex<SessionMap>,
    healthy: AtomicBool,
}

#[derive(Debug)]
struct ApiError {
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

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn unhealthy() -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "storage failure; service refuses writes",
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

impl AppState {
    fn ensure_healthy(&self) -> ApiResult<()> {
        if self.healthy.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(ApiError::unhealthy())
        }
    }

    fn storage_failure(&self, err: impl std::fmt::Display) -> ApiError {
        tracing::error!(%err, "storage failure, marking service unhealthy");
        self.healthy.store(false, Ordering::SeqCst);
        ApiError::unhealthy()
    }

    fn session_dir(&self, pid: &str, task: &str) -> ApiResult<SessionDir> {
        SessionDir::for_key(&self.data_dir, pid, task)
            .map_err(|e| ApiError::bad_request(e.to_string()))
    }

    /// Looks up a session known to this process, falling back to a
    /// descriptor left on disk by an earlier run.
    fn slot(&self, pid: &str, task: &str) -> ApiResult<Arc<Mutex<Slot>>> {
        let dir = self.session_dir(pid, task)?;
        if let Some(slot) = self
            .sessions
            .lock()
            .expect("session map poisoned")
            .get(&(pid.to_owned(), task.to_owned()))
        {
            return Ok(slot.clone());
        }
        if dir.descriptor_path().exists() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("session {pid}/{task} is not active"),
            ));
        }
        Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown session {pid}/{task}"),
        ))
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    if state.healthy.load(Ordering::SeqCst) {
        (StatusCode::OK, Json(json!({ "status": "ok" }))).into_response()
    } else {
        (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "status": "unhealthy" })),
        )
            .into_response()
    }
}

async fn open_session(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SessionDescriptor>)> {
    state.ensure_healthy()?;
    let req: OpenRequest = parse_body(&body)?;
    validate_key_component(&req.pid).map_err(|e| ApiError::bad_request(e.to_string()))?;
    validate_key_component(&req.task).map_err(|e| ApiError::bad_request(e.to_string()))?;
    req.geom
        .validate()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let dir = state.session_dir(&req.pid, &req.task)?;
    let key = (req.pid.clone(), req.task.clone());

    let mut sessions = state.sessions.lock().expect("session map poisoned");
    if sessions.contains_key(&key) || dir.descriptor_path().exists() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("session {}/{} already exists", req.pid, req.task),
        ));
    }
    let descriptor = SessionDescriptor {
        pid: req.pid.clone(),
        task: req.task.clone(),
        geom: req.geom,
        created_at: now_ms(),
        status: SessionStatus::Open,
    };
    let writers = dir
        .create()
        .and_then(|_| dir.write_descriptor(&descriptor))
        .and_then(|_| StreamWriters::create(&dir).map_err(|e| FormatError::io(dir.root(), e)))
        .map_err(|e| state.storage_failure(e))?;
    let buffer =
        SessionBuffer::new(&req.pid, &req.task, state.cfg).expect("config validated at startup");
    let session = OpenSession {
        descriptor: descriptor.clone(),
        dir,
        buffer,
        records: Vec::new(),
        writers,
    };
    sessions.insert(key, Arc::new(Mutex::new(Slot::Open(Box::new(session)))));
    tracing::info!(pid = %req.pid, task = %req.task, "session opened");
    Ok((StatusCode::CREATED, Json(descriptor)))
}

/// Validates the whole batch, then feeds it to the session buffer and
/// appends accepted events to the raw stream files.
fn ingest_batch<T>(
    state: &AppState,
    pid: &str,
    task: &str,
    items: Vec<T>,
    to_event: impl Fn(T, &str, &str) -> Event,
) -> ApiResult<BatchResponse> {
    state.ensure_healthy()?;
    let slot = state.slot(pid, task)?;
    let mut slot = slot.lock().expect("session poisoned");
    let Slot::Open(session) = &mut *slot else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("session {pid}/{task} is closed"),
        ));
    };
    let events: Vec<Event> = items
        .into_iter()
        .map(|item| to_event(item, pid, task))
        .collect();
    for (index, ev) in events.iter().enumerate() {
        let invalid = match ev {
            Event::Gaze(g) => g.validate().err(),
            Event::Transform(st) => st.validate().err().map(|e| e.to_string()),
            Event::Calibration(c) => (c.t < 0).then(|| "timestamp must be non-negative".to_owned()),
        };
        if let Some(reason) = invalid {
            return Err(ApiError::bad_request(format!(
                "invalid event at index {index}: {reason}"
            )));
        }
    }

    let mut resp = BatchResponse {
        accepted: 0,
        quarantined: 0,
        finalized: 0,
    };
    for ev in events {
        let ingested = session
            .buffer
            .ingest(ev.clone())
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        if !ingested.accepted {
            resp.quarantined += 1;
            continue;
        }
        resp.accepted += 1;
        resp.finalized += ingested.finalized.len() as u64;
        session.records.extend(ingested.finalized);
        let w = &mut session.writers;
        let written = match &ev {
            Event::Gaze(g) => write_jsonl_line(&mut w.gaze, &GazePoint::from(g)),
            Event::Transform(st) => write_jsonl_line(&mut w.transform, st),
            Event::Calibration(c) => write_jsonl_line(&mut w.events, c),
        };
        written.map_err(|e| state.storage_failure(e))?;
    }
    let w = &mut session.writers;
    w.gaze
        .flush()
        .and_then(|_| w.transform.flush())
        .and_then(|_| w.events.flush())
        .map_err(|e| state.storage_failure(e))?;
    Ok(resp)
}

async fn post_gaze(
    State(state): State<Arc<AppState>>,
    UrlPath((pid, task)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<BatchResponse>> {
    let items: Vec<GazePoint> = parse_body(&body)?;
    ingest_batch(&state, &pid, &task, items, |g, p, t| {
        Event::Gaze(g.into_sample(p, t))
    })
    .map(Json)
}

async fn post_transform(
    State(state): State<Arc<AppState>>,
    UrlPath((pid, task)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<BatchResponse>> {
    let items: Vec<TransformState> = parse_body(&body)?;
    ingest_batch(&state, &pid, &task, items, |st, _, _| Event::Transform(st)).map(Json)
}

async fn post_event(
    State(state): State<Arc<AppState>>,
    UrlPath((pid, task)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<BatchResponse>> {
    let items: Vec<CalibrationEvent> = parse_body(&body)?;
    ingest_batch(&state, &pid, &task, items, |ev, _, _| {
        Event::Calibration(ev)
    })
    .map(Json)
}

fn finish(session: &mut OpenSession) -> Result<gazealign_core::QualityReport, FormatError> {
    let tail = session.buffer.close();
    session.records.extend(tail);
    let report = quality(
        &session.records,
        session.buffer.discarded(),
        session.buffer.calibrations(),
    )
    .with_quarantine(session.buffer.quarantined());
    let w = &mut session.writers;
    for writer in [&mut w.gaze, &mut w.transform, &mut w.events] {
        writer
            .flush()
            .map_err(|e| FormatError::io(session.dir.root(), e))?;
    }
    let dir = &session.dir;
    gazealign_core::formats::write(&dir.combined_path(), &combined_csv_bytes(&session.records))?;
    gazealign_core::formats::write(&dir.quality_path(), &report.to_json_bytes())?;
    session.descriptor.status = SessionStatus::Closed;
    dir.write_descriptor(&session.descriptor)?;
    Ok(report)
}

async fn close_session(
    State(state): State<Arc<AppState>>,
    UrlPath((pid, task)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    state.ensure_healthy()?;
    let slot = state.slot(&pid, &task)?;
    let mut slot = slot.lock().expect("session poisoned");
    let Slot::Open(session) = &mut *slot else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("session {pid}/{task} is already closed"),
        ));
    };
    let report = finish(session).map_err(|e| state.storage_failure(e))?;
    *slot = Slot::Closed;
    tracing::info!(%pid, %task, matched = report.matched, discarded = report.discarded, "session closed");
    let body = report.to_json_bytes();
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn get_combined(
    State(state): State<Arc<AppState>>,
    UrlPath((pid, task)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let dir = state.session_dir(&pid, &task)?;
    if !dir.descriptor_path().exists() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown session {pid}/{task}"),
        ));
    }
    let descriptor = dir
        .read_descriptor()
        .map_err(|e| state.storage_failure(e))?;
    if descriptor.status != SessionStatus::Closed {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("session {pid}/{task} is still open"),
        ));
    }
    let bytes = gazealign_core::formats::read(&dir.combined_path())
        .map_err(|e| state.storage_failure(e))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], bytes).into_response())
}

fn check_writable(data_dir: &Path) -> Result<(), ServiceError> {
    let err = |source| ServiceError::DataDir {
        path: data_dir.to_owned(),
        source,
    };
    std::fs::create_dir_all(data_dir).map_err(err)?;
    let probe = data_dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(err)?;
    std::fs::remove_file(&probe).map_err(err)
}

/// Routes of the ingest protocol over a fresh session table.
pub fn router(data_dir: impl Into<PathBuf>, cfg: SyncConfig) -> Result<Router, ServiceError> {
    cfg.validate()?;
    let data_dir = data_dir.into();
    check_writable(&data_dir)?;
    let state = Arc::new(AppState {
        data_dir,
        cfg,
        sessions: Mutex::new(HashMap::new()),
        healthy: AtomicBool::new(true),
    });
    Ok(Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/session", post(open_session))
        .route("/v1/session/{pid}/{task}/gaze", post(post_gaze))
        .route("/v1/session/{pid}/{task}/transform", post(post_transform))
        .route("/v1/session/{pid}/{task}/event", post(post_event))
        .route("/v1/session/{pid}/{task}/close", post(close_session))
        .route("/v1/session/{pid}/{task}/combined", get(get_combined))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state))
}

/// A bound, not yet running server.
pub struct Server {
    listener: TcpListener,
    app: Router,
}

impl Server {
    pub async fn bind(
        addr: SocketAddr,
        data_dir: impl Into<PathBuf>,
        cfg: SyncConfig,
    ) -> Result<Self, ServiceError> {
        let app = router(data_dir, cfg)?;
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| ServiceError::Bind { addr, source })?;
        Ok(Self { listener, app })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    pub async fn run(self) -> Result<(), ServiceError> {
        self.run_until(std::future::pending()).await
    }

    pub async fn run_until(
        self,
        shutdown: impl Future<Output = ()> + Send + 'static,
    ) -> Result<(), ServiceError> {
        tracing::info!(addr = %self.local_addr(), "listening");
        axum::serve(self.listener, self.app)
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    }
}

/// Binds and serves until the process exits.
pub async fn serve(
    addr: SocketAddr,
    data_dir: impl Into<PathBuf>,
    cfg: SyncConfig,
) -> Result<(), ServiceError> {
    Server::bind(addr, data_dir, cfg).await?.run().await
}

//! HTTP service for preview-resolution editing: hole completion,
//! retargeting, reshuffling and local scaling.
//!
//! ```text
//! POST /sessions                     image bytes -> 201 {"id","width","height"}
//! GET  /sessions/{id}/preview.png    the stored preview image
//! POST /sessions/{id}/edits          EditRequest -> 202 {"jobId"}
//! GET  /sessions/{id}/jobs/{jobId}   {"state","progress","resultPngUrl"?,"error"?}
//! GET  /results/{token}.png
//! ```
//!
//! Every edit runs on the uploaded image alone, so repeating a request with
//! the same seed reproduces the same bytes.

pub mod annotations;
pub mod edit;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use patchmatch::image::{decode_image, encode_png, resize};
use patchmatch::synthesis::{with_progress, Progress};
use patchmatch::ImageBuffer;
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};

use edit::{prepare, EditRequest, Rejection};

pub const DEFAULT_PORT: u16 = 8787;

#[derive(Debug, Clone)]
pub struct Config {
    /// Longest side of the stored preview.
    pub preview_max_dim: usize,
    pub max_upload_bytes: usize,
    /// Jobs running at once across all sessions.
    pub workers: usize,
    /// Allowed CORS origin; `None` allows any.
    pub origin: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            preview_max_dim: 512,
            max_upload_bytes: 20 * 1024 * 1024,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            origin: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    fn name(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Done => "done",
            JobState::Failed => "failed",
        }
    }
}

struct Job {
    state: JobState,
    progress: Arc<Progress>,
    token: Option<String>,
    error: Option<String>,
}

struct Session {
    source: Arc<ImageBuffer>,
    jobs: HashMap<String, Job>,
    active: Option<String>,
}

struct Shared {
    config: Config,
    sessions: Mutex<HashMap<String, Session>>,
    results: Mutex<HashMap<String, Arc<Vec<u8>>>>,
    pool: Arc<Semaphore>,
}

type AppState = Arc<Shared>;

fn token() -> String {
    format!("{:032x}", rand::random::<u128>())
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

/// Longest side capped at `max_dim`, aspect ratio kept.
pub fn preview_dims(w: usize, h: usize, max_dim: usize) -> (usize, usize) {
    let long = w.max(h);
    if long <= max_dim {
        return (w, h);
    }
    let f = max_dim as f64 / long as f64;
    let s = |v: usize| ((v as f64 * f).round() as usize).clamp(1, max_dim);
    (s(w), s(h))
}

pub fn router(config: Config) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
        .allow_origin(match &config.origin {
            Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).expect("origin is a valid header value")),
            None => AllowOrigin::any(),
        });
    let limit = config.max_upload_bytes;
    let state: AppState = Arc::new(Shared {
        pool: Arc::new(Semaphore::new(config.workers.max(1))),
        config,
        sessions: Mutex::new(HashMap::new()),
        results: Mutex::new(HashMap::new()),
    });
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/preview.png", get(preview))
        .route("/sessions/{id}/edits", post(submit_edit))
        .route("/sessions/{id}/jobs/{job}", get(poll_job))
        .route("/results/{file}", get(result_png))
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> Response {
    let img = match decode_image(&body) {
        Ok(img) => img.to_rgb(),
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let (w, h) = preview_dims(img.width(), img.height(), st.config.preview_max_dim);
    let img = resize(&img, w, h);
    let id = token();
    st.sessions.lock().unwrap().insert(
        id.clone(),
        Session {
            source: Arc::new(img),
            jobs: HashMap::new(),
            active: None,
        },
    );
    (StatusCode::CREATED, Json(json!({ "id": id, "width": w, "height": h }))).into_response()
}

async fn preview(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    let source = match st.sessions.lock().unwrap().get(&id) {
        Some(s) => s.source.clone(),
        None => return error(StatusCode::NOT_FOUND, format!("no session {id}")),
    };
    match encode_png(&source) {
        Ok(b) => png(b),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn submit_edit(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let source = {
        let sessions = st.sessions.lock().unwrap();
        match sessions.get(&id) {
            None => return error(StatusCode::NOT_FOUND, format!("no session {id}")),
            Some(s) if s.active.is_some() => {
                return error(StatusCode::CONFLICT, "a job is already running in this session")
            }
            Some(s) => s.source.clone(),
        }
    };
    let req: EditRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid edit request: {e}")),
    };
    let work = match prepare(source, req, st.config.preview_max_dim) {
        Ok(w) => w,
        Err(Rejection::Bad(m)) => return error(StatusCode::BAD_REQUEST, m),
        Err(Rejection::Geometry { message, label }) => {
            let mut body = json!({ "error": message });
            if let Some(l) = label {
                body["label"] = Value::from(l);
            }
            return (StatusCode::UNPROCESSABLE_ENTITY, Json(body)).into_response();
        }
    };

    let job_id = token();
    let progress = Arc::new(Progress::default());
    {
        let mut sessions = st.sessions.lock().unwrap();
        let Some(s) = sessions.get_mut(&id) else {
            return error(StatusCode::NOT_FOUND, format!("no session {id}"));
        };
        if s.active.is_some() {
            return error(StatusCode::CONFLICT, "a job is already running in this session");
        }
        s.active = Some(job_id.clone());
        s.jobs.insert(
            job_id.clone(),
            Job {
                state: JobState::Queued,
                progress: progress.clone(),
                token: None,
                error: None,
            },
        );
    }

    let (st2, sid, jid) = (st.clone(), id.clone(), job_id.clone());
    tokio::spawn(async move {
        let _permit = st2.pool.clone().acquire_owned().await.expect("pool is never closed");
        set_state(&st2, &sid, &jid, |j| j.state = JobState::Running);
        let p = progress.clone();
        let outcome = tokio::task::spawn_blocking(move || with_progress(p, work)).await;
        let result = match outcome {
            Ok(Ok(bytes)) => {
                let t = token();
                st2.results.lock().unwrap().insert(t.clone(), Arc::new(bytes));
                Ok(t)
            }
            Ok(Err(e)) => Err(e.to_string()),
            Err(e) => Err(format!("synthesis stopped unexpectedly: {e}")),
        };
        let mut sessions = st2.sessions.lock().unwrap();
        if let Some(s) = sessions.get_mut(&sid) {
            s.active = None;
            if let Some(j) = s.jobs.get_mut(&jid) {
                match result {
                    Ok(t) => {
                        j.state = JobState::Done;
                        j.token = Some(t);
                    }
                    Err(e) => {
                        j.state = JobState::Failed;
                        j.error = Some(e);
                    }
                }
            }
        }
    });
    (StatusCode::ACCEPTED, Json(json!({ "jobId": job_id }))).into_response()
}

fn set_state(st: &Shared, sid: &str, jid: &str, f: impl FnOnce(&mut Job)) {
    if let Some(j) = st
        .sessions
        .lock()
        .unwrap()
        .get_mut(sid)
        .and_then(|s| s.jobs.get_mut(jid))
    {
        f(j);
    }
}

async fn poll_job(State(st): State<AppState>, Path((id, job)): Path<(String, String)>) -> Response {
    let sessions = st.sessions.lock().unwrap();
    let Some(s) = sessions.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("no session {id}"));
    };
    let Some(j) = s.jobs.get(&job) else {
        return error(StatusCode::NOT_FOUND, format!("no job {job} in session {id}"));
    };
    let progress = match j.state {
        JobState::Done => 1.0,
        _ => j.progress.fraction(),
    };
    let mut body = json!({ "state": j.state.name(), "progress": progress });
    if let Some(t) = &j.token {
        body["resultPngUrl"] = Value::from(format!("/results/{t}.png"));
    }
    if let Some(e) = &j.error {
        body["error"] = Value::from(e.clone());
    }
    Json(body).into_response()
}

async fn result_png(State(st): State<AppState>, Path(file): Path<String>) -> Response {
    let found = file
        .strip_suffix(".png")
        .and_then(|t| st.results.lock().unwrap().get(t).cloned());
    match found {
        Some(b) => png(b.as_ref().clone()),
        None => error(StatusCode::NOT_FOUND, format!("no result {file}")),
    }
}

//! HTTP surface for a remote operator panel.
//!
//! The replay loop runs on its own thread and owns the memory. When it asks
//! for feedback it parks until `POST /api/feedback` delivers an answer. All
//! handlers go through one mutex, so `/api/state` and `/api/events` always
//! see a consistent snapshot and each pending request is answered at most
//! once.
//!
//! | method | path                       | effect                                   |
//! |--------|----------------------------|------------------------------------------|
//! | GET    | `/api/state`               | current frame, p_known, pending flag     |
//! | POST   | `/api/feedback`            | `{"label": ...}`; 200, or 409 if nothing pending |
//! | POST   | `/api/step`                | advance one frame (manual pacing only)   |
//! | GET    | `/api/events`              | full event log                           |
//! | GET    | `/api/frame/{index}/image` | bytes of the frame's `image_ref`, or 404 |

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{
    finish, prepare, Action, AssessmentEvent, Feedback, FeedbackProvider, ReplaySession, RunConfig,
};
use crate::knowledge::ExpertAssessment;
use crate::memory::{Assessment, CompetenceLabel, FeedbackSource, Verdict};
use crate::store::EpisodeFrame;

#[derive(Debug, Clone, Copy)]
pub struct Pacing {
    /// Delay between frames when not stepping manually.
    pub interval: Duration,
    /// Wait for `POST /api/step` before each frame after the first.
    pub manual: bool,
}

impl Default for Pacing {
    fn default() -> Self {
        Self {
            interval: Duration::from_millis(500),
            manual: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct FrameView {
    frame_index: u64,
    frame_id: String,
    p_known: f64,
    verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    competence_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expert: Option<ExpertAssessment>,
}

#[derive(Default)]
struct Inner {
    current: Option<FrameView>,
    pending: Option<u64>,
    answer: Option<CompetenceLabel>,
    step_credits: u64,
    events: Vec<AssessmentEvent>,
    finished: bool,
    error: Option<String>,
}

/// Shared between the HTTP handlers and the replay thread.
pub struct ServiceState {
    inner: Mutex<Inner>,
    changed: Condvar,
    images: BTreeMap<u64, PathBuf>,
    pacing: Pacing,
}

impl ServiceState {
    pub fn new(frames: &[EpisodeFrame], pacing: Pacing) -> Arc<Self> {
        let images = frames
            .iter()
            .filter_map(|f| {
                f.descriptor
                    .image_ref()
                    .map(|r| (f.frame_index, PathBuf::from(r)))
            })
            .collect();
        Arc::new(Self {
            inner: Mutex::new(Inner::default()),
            changed: Condvar::new(),
            images,
            pacing,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn wait<'a>(&self, guard: MutexGuard<'a, Inner>) -> MutexGuard<'a, Inner> {
        self.changed.wait(guard).unwrap_or_else(|p| p.into_inner())
    }
}

/// Parks the replay thread until an operator answers over HTTP.
struct HttpFeedback {
    state: Arc<ServiceState>,
}

impl FeedbackProvider for HttpFeedback {
    fn request(&mut self, frame: &EpisodeFrame, _: &Assessment) -> Result<Feedback> {
        let mut inner = self.state.lock();
        inner.answer = None;
        inner.pending = Some(frame.frame_index);
        self.state.changed.notify_all();
        loop {
            if let Some(label) = inner.answer.take() {
                return Ok(Feedback {
                    label,
                    source: FeedbackSource::Human,
                });
            }
            inner = self.state.wait(inner);
        }
    }
}

fn run_frames(
    session: &mut ReplaySession,
    frames: &[EpisodeFrame],
    state: &Arc<ServiceState>,
) -> Result<()> {
    let mut provider = HttpFeedback {
        state: Arc::clone(state),
    };
    for (i, frame) in frames.iter().enumerate() {
        if i > 0 {
            if state.pacing.manual {
                let mut inner = state.lock();
                while inner.step_credits == 0 {
                    inner = state.wait(inner);
                }
                inner.step_credits -= 1;
            } else {
                std::thread::sleep(state.pacing.interval);
            }
        }
        let (assessment, expert) = session.preview(frame)?;
        state.lock().current = Some(FrameView {
            frame_index: frame.frame_index,
            frame_id: frame.descriptor.id().to_string(),
            p_known: assessment.p_known,
            verdict: assessment.verdict,
            competence_score: assessment.competence_score,
            expert,
        });
        let event = session.step(frame, &mut provider)?.clone();
        let mut inner = state.lock();
        inner.events.push(event);
        state.changed.notify_all();
    }
    Ok(())
}

/// Starts the replay loop on its own thread. `on_finish` runs once the last
/// frame has been processed (persisting state, writing the report).
pub fn spawn_replay<F>(
    mut session: ReplaySession,
    frames: Vec<EpisodeFrame>,
    state: Arc<ServiceState>,
    on_finish: F,
) -> JoinHandle<()>
where
    F: FnOnce(&ReplaySession) -> Result<()> + Send + 'static,
{
    std::thread::spawn(move || {
        let outcome = run_frames(&mut session, &frames, &state).and_then(|()| on_finish(&session));
        let mut inner = state.lock();
        inner.finished = true;
        inner.pending = None;
        if let Err(e) = outcome {
            inner.error = Some(e.to_string());
        }
        state.changed.notify_all();
    })
}

#[derive(Debug, Serialize)]
struct StateResponse {
    frame_index: Option<u64>,
    frame_id: Option<String>,
    p_known: Option<f64>,
    verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    competence_score: Option<f64>,
    pending_request: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    expert: Option<ExpertAssessment>,
    ask_count: usize,
    frames_done: usize,
    finished: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

async fn get_state(State(state): State<Arc<ServiceState>>) -> Json<StateResponse> {
    let inner = state.lock();
    let current = inner.current.clone();
    Json(StateResponse {
        frame_index: current.as_ref().map(|c| c.frame_index),
        frame_id: current.as_ref().map(|c| c.frame_id.clone()),
        p_known: current.as_ref().map(|c| c.p_known),
        verdict: current.as_ref().map(|c| c.verdict),
        competence_score: current.as_ref().and_then(|c| c.competence_score),
        pending_request: inner.pending.is_some(),
        expert: current.and_then(|c| c.expert),
        ask_count: inner
            .events
            .iter()
            .filter(|e| e.action == Action::AskHuman)
            .count(),
        frames_done: inner.events.len(),
        finished: inner.finished,
        error: inner.error.clone(),
    })
}

#[derive(Debug, Deserialize)]
struct FeedbackBody {
    label: CompetenceLabel,
    /// When given, must name the frame currently waiting for feedback.
    #[serde(default)]
    frame_index: Option<u64>,
}

async fn post_feedback(
    State(state): State<Arc<ServiceState>>,
    Json(body): Json<FeedbackBody>,
) -> Response {
    let mut inner = state.lock();
    match inner.pending {
        Some(pending) if body.frame_index.is_none_or(|f| f == pending) => {
            inner.pending = None;
            inner.answer = Some(body.label);
            state.changed.notify_all();
            (
                StatusCode::OK,
                Json(serde_json::json!({ "frame_index": pending, "label": body.label })),
            )
                .into_response()
        }
        _ => (
            StatusCode::CONFLICT,
            Json(serde_json::json!({ "error": "no matching pending feedback request" })),
        )
            .into_response(),
    }
}

async fn post_step(State(state): State<Arc<ServiceState>>) -> Response {
    if !state.pacing.manual {
        return (
            StatusCode::CONFLICT,
            Json(serde_json::json!({ "error": "replay is not in manual stepping mode" })),
        )
            .into_response();
    }
    let mut inner = state.lock();
    inner.step_credits += 1;
    state.changed.notify_all();
    (
        StatusCode::OK,
        Json(serde_json::json!({ "step_credits": inner.step_credits })),
    )
        .into_response()
}

async fn get_events(State(state): State<Arc<ServiceState>>) -> Json<Vec<AssessmentEvent>> {
    Json(state.lock().events.clone())
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

async fn get_image(State(state): State<Arc<ServiceState>>, Path(index): Path<u64>) -> Response {
    let Some(path) = state.images.get(&index) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Lets a panel served from another origin talk to the API.
async fn cors(request: Request, next: Next) -> Response {
    let mut response = if request.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(request).await
    };
    let headers = response.headers_mut();
    headers.insert(
        header::ACCESS_CONTROL_ALLOW_ORIGIN,
        HeaderValue::from_static("*"),
    );
    headers.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("GET, POST, OPTIONS"),
    );
    headers.insert(
        header::ACCESS_CONTROL_ALLOW_HEADERS,
        HeaderValue::from_static("content-type"),
    );
    response
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/state", get(get_state))
        .route("/api/feedback", post(post_feedback))
        .route("/api/step", post(post_step))
        .route("/api/events", get(get_events))
        .route("/api/frame/{index}/image", get(get_image))
        .layer(middleware::from_fn(cors))
        .with_state(state)
}

/// Loads everything from `config`, starts the replay loop and serves the API
/// until the process is interrupted.
pub async fn serve(config: &RunConfig) -> Result<()> {
    let (session, frames) = prepare(config)?;
    let state = ServiceState::new(
        &frames,
        Pacing {
            interval: Duration::from_millis(config.pace_ms),
            manual: config.manual_step,
        },
    );
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", config.port))
        .await
        .map_err(|source| Error::BindFailure {
            port: config.port,
            source,
        })?;
    let finish_config = config.clone();
    spawn_replay(session, frames, Arc::clone(&state), move |session| {
        finish(&finish_config, session).map(|_| ())
    });
    eprintln!("feedback service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

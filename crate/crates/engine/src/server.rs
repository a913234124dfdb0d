//! HTTP control surface and server-sent event stream.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `POST /session` | [`SessionConfig`] JSON | started config |
//! | `POST /session/params` | [`ParamUpdate`] JSON | applied config |
//! | `POST /session/image` | encoded image bytes | [`ImageAck`] |
//! | `POST /session/audio` | 16 kHz mono WAV bytes | [`AudioAck`] |
//! | `GET /session/status` | | [`SessionStatus`] |
//! | `GET /session/events` | | SSE, one [`EngineEvent`] JSON per `data:` line |

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use log::{info, warn};
use serde_json::json;
use tokio::sync::broadcast;
use tokio::task::JoinHandle;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::StreamExt;

use crate::config::{ParamUpdate, SessionConfig};
use crate::error::EngineError;
use crate::event::EngineEvent;
use crate::resources::Resources;
use crate::session::{AudioAck, Engine, ImageAck, SessionStatus};

/// Events buffered per subscriber before the oldest are dropped.
pub const EVENT_QUEUE: usize = 256;
const MAX_UPLOAD: usize = 16 * 1024 * 1024;

pub type Loader = dyn Fn(&SessionConfig) -> Result<Arc<Resources>, EngineError> + Send + Sync;

struct Shared {
    engine: Mutex<Engine>,
    epoch: Mutex<Instant>,
    events: broadcast::Sender<EngineEvent>,
    ticker: Mutex<Option<JoinHandle<()>>>,
    loader: Box<Loader>,
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl Default for AppState {
    fn default() -> Self {
        AppState::new()
    }
}

impl AppState {
    /// Sessions load their resources from the paths in the config.
    pub fn new() -> Self {
        AppState::with_loader(|config| Resources::load(config).map(Arc::new))
    }

    pub fn with_loader(loader: impl Fn(&SessionConfig) -> Result<Arc<Resources>, EngineError> + Send + Sync + 'static) -> Self {
        let (events, _) = broadcast::channel(EVENT_QUEUE);
        AppState {
            shared: Arc::new(Shared {
                engine: Mutex::new(Engine::new()),
                epoch: Mutex::new(Instant::now()),
                events,
                ticker: Mutex::new(None),
                loader: Box::new(loader),
            }),
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<EngineEvent> {
        self.shared.events.subscribe()
    }

    fn now(&self) -> f64 {
        self.shared.epoch.lock().expect("epoch").elapsed().as_secs_f64()
    }

    fn publish(&self, events: Vec<EngineEvent>) {
        for e in events {
            // no subscribers is fine
            let _ = self.shared.events.send(e);
        }
    }

    fn with_engine<R>(&self, f: impl FnOnce(&mut Engine) -> R) -> R {
        f(&mut self.shared.engine.lock().expect("engine lock"))
    }

    /// Fire every tick that is due by wall-clock time.
    fn pump(&self) -> Option<f64> {
        let now = self.now();
        let (events, next) = self.with_engine(|engine| {
            let session = engine.session_mut().ok()?;
            let events = session.advance(now);
            Some((events, session.next_tick()))
        })?;
        self.publish(events);
        Some(next)
    }

    fn spawn_ticker(&self) {
        let state = self.clone();
        let handle = tokio::spawn(async move {
            loop {
                let pumped = {
                    let state = state.clone();
                    tokio::task::spawn_blocking(move || state.pump()).await
                };
                let next = match pumped {
                    Ok(Some(next)) => next,
                    Ok(None) => return,
                    Err(e) => {
                        warn!("ticker stopped: {e}");
                        return;
                    }
                };
                let wait = (next - state.now()).max(0.0);
                tokio::time::sleep(Duration::from_secs_f64(wait)).await;
            }
        });
        if let Some(old) = self.shared.ticker.lock().expect("ticker").replace(handle) {
            old.abort();
        }
    }
}

pub struct ApiError(EngineError);

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        ApiError(e)
    }
}

impl From<brushwork::Error> for ApiError {
    fn from(e: brushwork::Error) -> Self {
        ApiError(EngineError::Core(e))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use brushwork::Error as Core;
        let status = match &self.0 {
            EngineError::Config(_) | EngineError::Script(_) | EngineError::Json(_) => StatusCode::BAD_REQUEST,
            EngineError::State(_) => StatusCode::CONFLICT,
            EngineError::Startup(_) => StatusCode::UNPROCESSABLE_ENTITY,
            EngineError::Core(e) => match e.root() {
                Core::Decode(_) | Core::Precondition(_) | Core::Shape(_) => StatusCode::BAD_REQUEST,
                Core::UnsupportedFormat(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
            EngineError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError(EngineError::State(format!("worker failed: {e}")))))
}

async fn start_session(State(state): State<AppState>, Json(config): Json<SessionConfig>) -> ApiResult<SessionConfig> {
    config.validate()?;
    let s = state.clone();
    let config = blocking(move || {
        let resources = (s.shared.loader)(&config)?;
        *s.shared.epoch.lock().expect("epoch") = Instant::now();
        let events = s.with_engine(|engine| engine.start(config.clone(), resources, 0.0))?;
        s.publish(events);
        info!("session started in {:?} mode", config.mode);
        Ok(config)
    })
    .await?;
    state.spawn_ticker();
    Ok(Json(config))
}

async fn set_params(State(state): State<AppState>, Json(update): Json<ParamUpdate>) -> ApiResult<SessionConfig> {
    let now = state.now();
    let (config, events) = state.with_engine(|engine| engine.session_mut()?.set_params(&update, now))?;
    state.publish(events);
    Ok(Json(config))
}

async fn push_image(State(state): State<AppState>, body: Bytes) -> ApiResult<ImageAck> {
    let s = state.clone();
    blocking(move || {
        let now = s.now();
        let (ack, events) = s.with_engine(|engine| engine.session_mut()?.push_image_bytes(&body, now))?;
        s.publish(events);
        Ok(Json(ack))
    })
    .await
}

async fn push_audio(State(state): State<AppState>, body: Bytes) -> ApiResult<AudioAck> {
    Ok(Json(state.with_engine(|engine| engine.session_mut()?.push_wav(&body))?))
}

async fn status(State(state): State<AppState>) -> ApiResult<SessionStatus> {
    Ok(Json(state.with_engine(|engine| engine.session().map(|s| s.status()))?))
}

async fn events(State(state): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let stream = BroadcastStream::new(state.subscribe()).filter_map(|item| match item {
        Ok(e) => Some(Ok(Event::default().event(e.kind()).id(e.sequence.to_string()).data(e.to_json_line()))),
        // a lagging subscriber loses the oldest events and carries on
        Err(_) => None,
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/session", post(start_session))
        .route("/session/params", post(set_params))
        .route("/session/image", post(push_image))
        .route("/session/audio", post(push_audio))
        .route("/session/status", get(status))
        .route("/session/events", get(events))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

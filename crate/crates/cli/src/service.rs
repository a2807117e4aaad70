//! HTTP/WebSocket front end for live interaction sessions.
//!
//! Every session runs on a server-owned clock: a background task advances it in
//! fixed 40 ms steps, and all mutations (commands, spots, ticks) go through one
//! mutex per session so they apply in a single total order. Events are appended
//! to the session's log and fanned out over a broadcast channel; WebSocket
//! subscribers replay the log from a cursor before switching to live delivery.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use borderforge_core::geometry::Point2;
use borderforge_core::gridmap::{encode_pgm, OccupancyGrid};
use borderforge_core::harness::{builtin, Scenario, ScenarioError};
use borderforge_core::interaction::{Command, Event, InteractionSession, Mode, SessionSnapshot, SessionState};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, Mutex, RwLock};

/// Fixed simulation step of the server clock.
pub const TICK: Duration = Duration::from_millis(40);

const EVENT_CHANNEL: usize = 4096;

#[derive(Debug, Clone, Copy)]
pub struct ServiceConfig {
    /// Advance every session by this much wall-clock period; `None` freezes the clock
    /// (useful for tests that need exact control over simulated time).
    pub tick: Option<Duration>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { tick: Some(TICK) }
    }
}

/// Error body returned by every failing endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            field: None,
        }
    }

    fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        let err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_scenario", e.to_string());
        match e.field() {
            Some(f) => err.with_field(f),
            None => err,
        }
    }
}

/// Scenario reference in a create request: `"builtin:N"`, TOML text, or an inline object.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    Inline(Box<Scenario>),
}

impl ScenarioRef {
    fn resolve(self) -> Result<Scenario, ApiError> {
        match self {
            ScenarioRef::Named(s) if s.starts_with("builtin:") => builtin(&s).ok_or_else(|| {
                ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_scenario",
                    format!("unknown scenario {s:?}"),
                )
                .with_field("scenario")
            }),
            ScenarioRef::Named(text) => Ok(Scenario::from_toml(&text)?),
            ScenarioRef::Inline(sc) => Ok(*sc),
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub scenario: ScenarioRef,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> Mode {
    Mode::Nrs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub id: String,
    /// Creation time, milliseconds since the Unix epoch.
    pub created: u64,
    pub scenario: String,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    #[serde(flatten)]
    pub handle: SessionHandle,
    pub state: SessionState,
}

#[derive(Debug, Deserialize)]
pub struct CommandRequest {
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResponse {
    pub state: SessionState,
    pub events: Vec<Event>,
}

#[derive(Debug, Deserialize)]
pub struct SpotRequest {
    pub x: f64,
    pub y: f64,
    /// Recorded for diagnostics only; the server clock is authoritative.
    #[serde(default)]
    pub client_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotResponse {
    pub detections: usize,
    pub state: SessionState,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResponse {
    pub id: String,
    pub scenario: String,
    /// Timestamp the client attached to its most recent spot, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_client_time: Option<f64>,
    #[serde(flatten)]
    pub snapshot: SessionSnapshot,
}

#[derive(Debug, Deserialize)]
pub struct EventsQuery {
    #[serde(default)]
    pub cursor: u64,
}

struct Live {
    session: InteractionSession,
    last_client_time: Option<f64>,
}

struct Entry {
    handle: SessionHandle,
    bounds: [f64; 2],
    live: Mutex<Live>,
    feed: broadcast::Sender<Event>,
}

impl Entry {
    /// Applies `f` under the session lock and publishes the events it produced,
    /// so subscribers see them in log order.
    async fn apply<R>(&self, f: impl FnOnce(&mut Live) -> (R, Vec<Event>)) -> (R, Vec<Event>) {
        let mut live = self.live.lock().await;
        let (r, events) = f(&mut live);
        for e in &events {
            // no subscribers is fine
            let _ = self.feed.send(e.clone());
        }
        (r, events)
    }
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Entry>>>>,
    next_id: Arc<AtomicU64>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
            config,
        }
    }

    async fn get(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    pub async fn session_count(&self) -> usize {
        self.sessions.read().await.len()
    }

    /// Advances one session's clock by `dt` seconds. With the ticker disabled this is the
    /// only way simulated time moves, which makes a driven session reproducible.
    pub async fn advance(&self, id: &str, dt: f64) -> Result<Vec<Event>, ApiError> {
        let entry = self.get(id).await?;
        let (result, events) = entry
            .apply(|live| match live.session.tick(dt) {
                Ok(events) => (Ok(()), events),
                Err(e) => (Err(e), Vec::new()),
            })
            .await;
        result.map_err(|e| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_tick", e.to_string()).with_field("dt")
        })?;
        Ok(events)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/commands", post(post_command))
        .route("/sessions/{id}/spots", post(post_spot))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/maps/{which}", get(get_map))
        .route("/sessions/{id}/events", get(event_stream))
        .with_state(state)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: std::net::SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "session service listening");
    axum::serve(listener, router(AppState::new(config))).await
}

fn spawn_ticker(entry: &Arc<Entry>, period: Duration) {
    let weak = Arc::downgrade(entry);
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        interval.tick().await;
        loop {
            interval.tick().await;
            // the session was deleted
            let Some(entry) = weak.upgrade() else { break };
            let dt = TICK.as_secs_f64();
            entry
                .apply(|live| match live.session.tick(dt) {
                    Ok(events) => ((), events),
                    Err(e) => {
                        tracing::warn!(error = %e, "tick failed");
                        ((), Vec::new())
                    }
                })
                .await;
        }
    });
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let Json(req) = body?;
    let scenario = req.scenario.resolve()?;
    scenario.validate()?;
    let config = scenario.session_config(req.mode, req.seed, 1.0)?;
    let prior = scenario.prior()?;
    let session = InteractionSession::new(config, prior).map_err(|e| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_scenario", e.to_string()).with_field("robot")
    })?;

    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64);
    let handle = SessionHandle {
        id: id.clone(),
        created,
        scenario: scenario.name.clone(),
        mode: req.mode,
    };
    let (feed, _) = broadcast::channel(EVENT_CHANNEL);
    let entry = Arc::new(Entry {
        handle: handle.clone(),
        bounds: scenario.bounds,
        live: Mutex::new(Live {
            session,
            last_client_time: None,
        }),
        feed,
    });
    if let Some(period) = app.config.tick {
        spawn_ticker(&entry, period);
    }
    app.sessions.write().await.insert(id.clone(), entry);
    tracing::debug!(%id, scenario = %handle.scenario, mode = %handle.mode, "session created");
    Ok((
        StatusCode::CREATED,
        Json(CreateResponse {
            handle,
            state: SessionState::Default,
        }),
    ))
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.sessions.write().await.remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(&id)),
    }
}

async fn post_command(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<CommandRequest>, JsonRejection>,
) -> Result<Json<CommandResponse>, ApiError> {
    let entry = app.get(&id).await?;
    let Json(req) = body?;
    let cmd: Command = req.command.parse().map_err(|m: String| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_command", m).with_field("command")
    })?;
    let (state, events) = entry
        .apply(|live| {
            let events = live.session.handle_command(cmd);
            (live.session.state(), events)
        })
        .await;
    Ok(Json(CommandResponse { state, events }))
}

async fn post_spot(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SpotRequest>, JsonRejection>,
) -> Result<Json<SpotResponse>, ApiError> {
    let entry = app.get(&id).await?;
    let Json(req) = body?;
    let [w, h] = entry.bounds;
    if !(req.x.is_finite() && req.y.is_finite() && (0.0..=w).contains(&req.x) && (0.0..=h).contains(&req.y)) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "out_of_bounds",
            format!(
                "spot ({}, {}) is outside the scenario bounds [0, {w}] x [0, {h}]",
                req.x, req.y
            ),
        )
        .with_field("point"));
    }
    let ((detections, state), events) = entry
        .apply(|live| {
            if req.client_time.is_some() {
                live.last_client_time = req.client_time;
            }
            let (events, n) = live.session.on_laser_spot(Point2::new(req.x, req.y));
            ((n, live.session.state()), events)
        })
        .await;
    Ok(Json(SpotResponse {
        detections,
        state,
        events,
    }))
}

async fn get_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<StateResponse>, ApiError> {
    let entry = app.get(&id).await?;
    let live = entry.live.lock().await;
    Ok(Json(StateResponse {
        id: entry.handle.id.clone(),
        scenario: entry.handle.scenario.clone(),
        last_client_time: live.last_client_time,
        snapshot: live.session.snapshot(),
    }))
}

fn map_response(grid: &OccupancyGrid, version: u64) -> Response {
    let origin = grid.origin();
    let mut headers = HeaderMap::new();
    headers.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("image/x-portable-graymap"),
    );
    let meta = [
        ("x-map-resolution", grid.resolution().to_string()),
        (
            "x-map-origin",
            format!("{},{},{}", origin.position.x, origin.position.y, origin.theta),
        ),
        ("x-map-version", version.to_string()),
    ];
    for (k, v) in meta {
        if let Ok(v) = HeaderValue::from_str(&v) {
            headers.insert(k, v);
        }
    }
    (headers, encode_pgm(grid)).into_response()
}

async fn get_map(State(app): State<AppState>, Path((id, which)): Path<(String, String)>) -> Result<Response, ApiError> {
    let entry = app.get(&id).await?;
    let live = entry.live.lock().await;
    let s = &live.session;
    match which.as_str() {
        "prior" => Ok(map_response(s.prior(), 0)),
        "posterior" => match s.posterior() {
            Some(post) => Ok(map_response(post, s.map_version())),
            None => Err(ApiError::new(
                StatusCode::CONFLICT,
                "not_ready",
                "no border has been saved yet",
            )),
        },
        other => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("unknown map {other:?}; expected prior or posterior"),
        )
        .with_field("which")),
    }
}

async fn event_stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let entry = app.get(&id).await?;
    Ok(ws.on_upgrade(move |socket| pump_events(socket, entry, q.cursor)))
}

/// Sends every event with `seq >= cursor` exactly once and in order: first the backlog
/// from the session log, then live events. A lagging subscriber catches up from the log.
async fn pump_events(mut socket: WebSocket, entry: Arc<Entry>, cursor: u64) {
    let mut next = cursor;
    loop {
        // subscribe and read the backlog under the same lock, so nothing falls in between
        let (mut rx, backlog) = {
            let live = entry.live.lock().await;
            (entry.feed.subscribe(), live.session.events_since(next).to_vec())
        };
        for e in backlog {
            if send_event(&mut socket, &e).await.is_err() {
                return;
            }
            next = e.seq + 1;
        }
        loop {
            tokio::select! {
                msg = rx.recv() => match msg {
                    Ok(e) if e.seq < next => {}
                    Ok(e) => {
                        if send_event(&mut socket, &e).await.is_err() {
                            return;
                        }
                        next = e.seq + 1;
                    }
                    // fell behind: resubscribe and replay from the log
                    Err(broadcast::error::RecvError::Lagged(_)) => break,
                    Err(broadcast::error::RecvError::Closed) => {
                        let _ = socket.send(Message::Close(None)).await;
                        return;
                    }
                },
                incoming = socket.recv() => match incoming {
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => {}
                },
            }
        }
    }
}

async fn send_event(socket: &mut WebSocket, e: &Event) -> Result<(), axum::Error> {
    let line = serde_json::to_string(e).expect("events serialize");
    socket.send(Message::Text(line.into())).await
}

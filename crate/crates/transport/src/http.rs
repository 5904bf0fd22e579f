//! HTTP control API, the server-push guidance feed and the websocket stream bridge.

use std::convert::Infallible;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use feasicap_core::recording::PacketDecoder;
use feasicap_core::{Pose, PoseRecord};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::oneshot;
use tokio::time::Instant;

use crate::discovery::ServiceAnnouncement;
use crate::jobs::{CancelError, ReplayService, StartError};
use crate::store::EpisodeStore;
use crate::stream::PROTOCOL_VERSION;
use crate::worker::{Control, Feed, Msg, SessionStatus};

#[derive(Clone)]
pub(crate) struct AppState {
    pub store: EpisodeStore,
    pub replay: Arc<ReplayService>,
    pub worker: Arc<Mutex<std::sync::mpsc::Sender<Msg>>>,
    pub status: Arc<Mutex<SessionStatus>>,
    pub feed: Feed,
    pub busy: Arc<AtomicBool>,
    pub feed_period: Duration,
    pub announcement: Arc<Mutex<Option<ServiceAnnouncement>>>,
}

impl AppState {
    fn send(&self, msg: Msg) -> bool {
        self.worker.lock().unwrap_or_else(|p| p.into_inner()).send(msg).is_ok()
    }
}

fn error(code: StatusCode, msg: impl Into<String>) -> Response {
    (code, Json(json!({ "error": msg.into() }))).into_response()
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))
}

pub(crate) fn router(state: AppState) -> Router {
    Router::new()
        .route("/episodes", get(list_episodes))
        .route("/episodes/{id}/stats", get(episode_stats))
        .route("/replay", post(start_replay))
        .route("/replay/{job}", get(replay_status).delete(cancel_replay))
        .route("/feed", get(feed))
        .route("/session", get(session_status))
        .route("/session/clutch", post(set_clutch))
        .route("/session/base_anchor", post(set_base_anchor))
        .route("/session/calibration", post(set_calibration))
        .route("/robot", get(robot))
        .route("/announcement", get(announcement))
        .route("/stream/ws", get(stream_ws))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f).await.map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn list_episodes(State(s): State<AppState>) -> Response {
    match blocking(move || s.store.list()).await {
        Ok(Ok(list)) => Json(list).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(r) => r,
    }
}

async fn episode_stats(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    let id2 = id.clone();
    match blocking(move || s.store.stats(&id2)).await {
        Ok(Ok(Some(stats))) => Json(stats).into_response(),
        Ok(Ok(None)) => error(StatusCode::NOT_FOUND, format!("unknown episode {id}")),
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(r) => r,
    }
}

#[derive(Deserialize)]
struct ReplayRequest {
    episode_id: String,
    #[serde(default = "one")]
    speed_scale: f64,
}

fn one() -> f64 {
    1.0
}

async fn start_replay(State(s): State<AppState>, body: Bytes) -> Response {
    let req: ReplayRequest = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    if !(req.speed_scale.is_finite() && req.speed_scale > 0.0) {
        return error(StatusCode::BAD_REQUEST, "speed_scale must be positive");
    }
    match s.replay.start(&req.episode_id, req.speed_scale) {
        Ok(v) => (StatusCode::ACCEPTED, Json(json!({ "job_id": v.job_id, "status": v.status }))).into_response(),
        Err(StartError::UnknownEpisode) => error(StatusCode::NOT_FOUND, format!("unknown episode {}", req.episode_id)),
        Err(StartError::Busy(job)) => error(StatusCode::CONFLICT, format!("replay {job} is still running")),
    }
}

async fn replay_status(State(s): State<AppState>, Path(job): Path<String>) -> Response {
    match s.replay.get(&job) {
        Some(v) => Json(v).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown job {job}")),
    }
}

async fn cancel_replay(State(s): State<AppState>, Path(job): Path<String>) -> Response {
    match s.replay.cancel(&job) {
        Ok(v) => Json(v).into_response(),
        Err(CancelError::UnknownJob) => error(StatusCode::NOT_FOUND, format!("unknown job {job}")),
        Err(CancelError::Finished(st)) => error(StatusCode::CONFLICT, format!("job {job} already {st:?}")),
    }
}

#[derive(Deserialize)]
struct FeedQuery {
    #[serde(default)]
    full: Option<String>,
}

/// Latest-value stream, at most one event per feed period on average (bursts of two absorb
/// arrival jitter). A slow reader simply sees fewer snapshots.
async fn feed(State(s): State<AppState>, Query(q): Query<FeedQuery>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let full = matches!(q.full.as_deref(), Some("1" | "true"));
    let mut rx = s.feed.clone();
    rx.mark_changed();
    let period = s.feed_period;
    let stream = futures::stream::unfold((rx, Instant::now()), move |(mut rx, next)| async move {
        loop {
            rx.changed().await.ok()?;
            tokio::time::sleep_until(next).await;
            let Some(out) = rx.borrow_and_update().clone() else { continue };
            let now = Instant::now();
            let next = (next + period).max(now.checked_sub(period).unwrap_or(now));
            let data = serde_json::to_string(&out.snapshot(full)).expect("snapshot serializes");
            let ev = Event::default().event("guidance").id(out.frame_index.to_string()).data(data);
            return Some((Ok(ev), (rx, next)));
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

async fn session_status(State(s): State<AppState>) -> Response {
    Json(s.status.lock().unwrap_or_else(|p| p.into_inner()).clone()).into_response()
}

async fn control(s: &AppState, cmd: Control) -> Response {
    let (tx, rx) = oneshot::channel();
    if !s.send(Msg::Control { cmd, reply: tx }) {
        return error(StatusCode::SERVICE_UNAVAILABLE, "guidance worker stopped");
    }
    match rx.await {
        Ok(Ok(st)) => Json(st).into_response(),
        Ok(Err(e)) => error(StatusCode::CONFLICT, e),
        Err(_) => error(StatusCode::SERVICE_UNAVAILABLE, "guidance worker stopped"),
    }
}

#[derive(Deserialize)]
struct ClutchRequest {
    engaged: bool,
}

async fn set_clutch(State(s): State<AppState>, body: Bytes) -> Response {
    match parse::<ClutchRequest>(&body) {
        Ok(r) => control(&s, Control::Clutch(r.engaged)).await,
        Err(r) => r,
    }
}

fn checked_pose(r: &PoseRecord) -> Result<Pose<f64>, Response> {
    let n = r.quaternion.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(r.translation.iter().all(|x| x.is_finite()) && (n - 1.0).abs() < 1e-6) {
        return Err(error(StatusCode::BAD_REQUEST, "pose needs finite translation and a unit quaternion"));
    }
    Ok(Pose::from(r))
}

#[derive(Deserialize)]
struct PoseRequest {
    pose: PoseRecord,
}

/// `{pose}` places the virtual base at that tracker-world pose.
async fn set_base_anchor(State(s): State<AppState>, body: Bytes) -> Response {
    match parse::<PoseRequest>(&body).and_then(|r| checked_pose(&r.pose)) {
        Ok(p) => control(&s, Control::BaseAnchor(p)).await,
        Err(r) => r,
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CalibrationRequest {
    Direct { cam_to_tcp: PoseRecord },
    Capture { device_pose: PoseRecord, desired_tcp_pose: PoseRecord },
}

/// Either `{cam_to_tcp}` or a one-shot alignment `{device_pose, desired_tcp_pose}`.
async fn set_calibration(State(s): State<AppState>, body: Bytes) -> Response {
    let cal = match parse::<CalibrationRequest>(&body) {
        Ok(CalibrationRequest::Direct { cam_to_tcp }) => checked_pose(&cam_to_tcp),
        Ok(CalibrationRequest::Capture { device_pose, desired_tcp_pose }) => checked_pose(&device_pose)
            .and_then(|d| checked_pose(&desired_tcp_pose).map(|t| feasicap_core::guidance::calibrate(&d, &t).cam_to_tcp)),
        Err(r) => Err(r),
    };
    match cal {
        Ok(p) => control(&s, Control::Calibration(p)).await,
        Err(r) => r,
    }
}

async fn robot(State(s): State<AppState>) -> Response {
    Json(json!({ "q": s.replay.robot_q() })).into_response()
}

async fn announcement(State(s): State<AppState>) -> Response {
    match s.announcement.lock().unwrap_or_else(|p| p.into_inner()).clone() {
        Some(a) => Json(a).into_response(),
        None => error(StatusCode::NOT_FOUND, "not announced"),
    }
}

#[derive(Deserialize)]
struct WsQuery {
    #[serde(default)]
    proto: Option<u16>,
}

/// Binary messages carry frame packets (any split); each packet is answered with a binary ack.
async fn stream_ws(State(s): State<AppState>, Query(q): Query<WsQuery>, ws: WebSocketUpgrade) -> Response {
    if let Some(v) = q.proto.filter(|v| *v != PROTOCOL_VERSION) {
        return error(StatusCode::BAD_REQUEST, format!("protocol version {v} unsupported, server speaks {PROTOCOL_VERSION}"));
    }
    if s.busy.swap(true, Ordering::AcqRel) {
        return error(StatusCode::CONFLICT, "a stream session is already active");
    }
    ws.on_upgrade(move |socket| async move {
        let error = bridge(&s, socket).await;
        s.send(Msg::Close { error });
        s.busy.store(false, Ordering::Release);
    })
}

async fn bridge(s: &AppState, mut socket: WebSocket) -> Option<String> {
    s.send(Msg::Open { source: "websocket".into() });
    let mut decoder = PacketDecoder::new();
    while let Some(msg) = socket.recv().await {
        let data = match msg {
            Ok(Message::Binary(b)) => b,
            Ok(Message::Close(_)) | Err(_) => return None,
            Ok(_) => continue,
        };
        decoder.push(&data);
        loop {
            match decoder.next_packet() {
                Ok(Some(packet)) => {
                    let (tx, rx) = oneshot::channel();
                    if !s.send(Msg::Frame { packet, reply: tx }) {
                        return Some("guidance worker stopped".into());
                    }
                    let Ok(ack) = rx.await else { return Some("guidance worker stopped".into()) };
                    if socket.send(Message::Binary(ack.encode().to_vec().into())).await.is_err() {
                        return None;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    let _ = socket.send(Message::Close(None)).await;
                    return Some(format!("PacketCorrupt: {e}"));
                }
            }
        }
    }
    None
}

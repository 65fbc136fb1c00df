//! HTTP API over one review session.
//!
//! | Route | Response |
//! |---|---|
//! | `GET /session` | metadata, LED table, config, correction version |
//! | `GET /frames?t0_ms&t1_ms` | per-tick event rasters, at most [`MAX_FRAME_SPAN_MS`] ticks |
//! | `GET /clusters?t_ms` | clusters, signatures, assignment costs and matches |
//! | `GET /labels?t0_ms&t1_ms` | labels with corrections applied |
//! | `POST /corrections` | appends records, returns the merged frames they touch |
//! | `GET /export` | the whole corrected label set |
//!
//! Errors are `{"error": kind, "message": text}` with 400, 404 or 409.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use flashcap_core::{Correction, LabelFrame};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::session::{Corrections, Session, SessionError};

pub const MAX_FRAME_SPAN_MS: u64 = 1000;

#[derive(Debug)]
pub struct AppState {
    pub session: Session,
    pub corrections: RwLock<Corrections>,
}

impl AppState {
    pub fn open(dir: impl AsRef<std::path::Path>) -> Result<Self, SessionError> {
        let session = Session::open(dir)?;
        let corrections = RwLock::new(session.load_corrections()?);
        Ok(Self { session, corrections })
    }
}

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let e = &self.0;
        let (status, kind) = match e {
            SessionError::UnknownTick { .. } => (StatusCode::NOT_FOUND, "UnknownTick"),
            SessionError::NotASession(_) => (StatusCode::NOT_FOUND, "UnknownSession"),
            SessionError::Conflict { .. } => (StatusCode::CONFLICT, "Conflict"),
            SessionError::UnknownLed(_) => (StatusCode::BAD_REQUEST, "UnknownLed"),
            SessionError::UnknownCluster { .. } => (StatusCode::BAD_REQUEST, "UnknownCluster"),
            SessionError::BadRange(_) => (StatusCode::BAD_REQUEST, "BadRange"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        };
        let mut body = json!({ "error": kind, "message": e.to_string() });
        if let SessionError::Conflict { version, conflicts } = e {
            body["version"] = json!(version);
            body["conflicts"] = conflicts.iter().map(|(t_ms, led_id)| json!({ "t_ms": t_ms, "led_id": led_id })).collect();
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn required(name: &str, value: Option<u64>) -> Result<u64, ApiError> {
    value.ok_or_else(|| SessionError::BadRange(format!("missing query parameter {name}")).into())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/session", get(session_info))
        .route("/frames", get(frames))
        .route("/clusters", get(clusters))
        .route("/labels", get(labels))
        .route("/corrections", post(corrections))
        .route("/export", get(export))
        .fallback(|| async { (StatusCode::NOT_FOUND, Json(json!({ "error": "NotFound", "message": "no such route" }))) })
        .with_state(state)
}

async fn session_info(State(app): State<Arc<AppState>>) -> ApiResult {
    let s = &app.session;
    let h = s.stream.header();
    let version = app.corrections.read().unwrap().version();
    Ok(Json(json!({
        "id": s.manifest.id,
        "sensor_width": h.sensor_width,
        "sensor_height": h.sensor_height,
        "t_start_us": h.t_start,
        "t_end_us": h.t_end,
        "event_count": h.event_count,
        "frame_ticks": [s.index.ticks().start, s.index.ticks().end],
        "label_ticks": [s.labels.t0_ms, s.labels.t_end_ms()],
        "leds": s.leds.leds(),
        "led_hash": s.manifest.led_hash,
        "config_hash": s.manifest.config_hash,
        "config": s.config,
        "version": version,
    })))
}

#[derive(Debug, Deserialize)]
struct Span {
    t0_ms: Option<u64>,
    t1_ms: Option<u64>,
}

async fn frames(State(app): State<Arc<AppState>>, Query(q): Query<Span>) -> ApiResult {
    let (t0, t1) = (required("t0_ms", q.t0_ms)?, required("t1_ms", q.t1_ms)?);
    if t1.saturating_sub(t0) > MAX_FRAME_SPAN_MS {
        return Err(SessionError::BadRange(format!("span exceeds {MAX_FRAME_SPAN_MS} ms")).into());
    }
    let h = app.session.stream.header();
    let rasters = app.session.rasters(t0, t1)?;
    Ok(Json(json!({ "width": h.sensor_width, "height": h.sensor_height, "frames": rasters })))
}

#[derive(Debug, Deserialize)]
struct Tick {
    t_ms: Option<u64>,
}

async fn clusters(State(app): State<Arc<AppState>>, Query(q): Query<Tick>) -> ApiResult {
    let t_ms = required("t_ms", q.t_ms)?;
    let s = &app.session;
    let r = s.frame_result(t_ms)?;
    let ids = s.leds.ids();
    let clusters: Vec<Value> = r
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let matched = r.assignment.pairs.iter().find(|p| p.cluster == i);
            let costs: Vec<Option<f64>> =
                (0..r.costs.cols()).map(|j| Some(r.costs.get(i, j)).filter(|v| v.is_finite())).collect();
            json!({
                "index": i,
                "centroid": [c.centroid.0, c.centroid.1],
                "bbox": [c.bbox.0, c.bbox.1, c.bbox.2, c.bbox.3],
                "event_count": c.len(),
                "signature": r.signatures[i].map(|g| json!({
                    "mean_on_us": g.mean_on_us,
                    "mean_off_us": g.mean_off_us,
                    "period_us": g.period_us,
                    "sample_count": g.sample_count,
                })),
                "outlier": r.outliers[i],
                "costs": costs,
                "led": matched.map(|p| ids[p.led].clone()),
                "cost": matched.map(|p| p.cost),
            })
        })
        .collect();
    Ok(Json(json!({
        "t_ms": t_ms,
        "window_us": [r.window.0, r.window.1],
        "led_ids": ids,
        "d_max": r.costs.d_max,
        "clusters": clusters,
    })))
}

fn frame_slice(frames: &[LabelFrame], t0_ms: u64, from: u64, to: u64) -> &[LabelFrame] {
    &frames[(from - t0_ms) as usize..(to - t0_ms) as usize]
}

async fn labels(State(app): State<Arc<AppState>>, Query(q): Query<Span>) -> ApiResult {
    let ticks = app.session.label_ticks();
    let t0 = q.t0_ms.unwrap_or(ticks.start);
    let t1 = q.t1_ms.unwrap_or(ticks.end).min(ticks.end);
    if !ticks.contains(&t0) {
        return Err(SessionError::UnknownTick { t_ms: t0, t0_ms: ticks.start, t_end_ms: ticks.end }.into());
    }
    if t1 <= t0 {
        return Err(SessionError::BadRange(format!("t1_ms {t1} must exceed t0_ms {t0}")).into());
    }
    let state = app.corrections.read().unwrap();
    Ok(Json(json!({
        "version": state.version(),
        "led_ids": state.merged.led_ids,
        "frames": frame_slice(&state.merged.frames, ticks.start, t0, t1),
    })))
}

#[derive(Debug, Deserialize)]
struct Submission {
    base_version: Option<u64>,
    records: Vec<Correction>,
}

async fn corrections(State(app): State<Arc<AppState>>, Json(body): Json<Submission>) -> ApiResult {
    let mut state = app.corrections.write().unwrap();
    let mut ticks: Vec<u64> = body.records.iter().map(|r| r.t_ms).collect();
    let version = app.session.submit(&mut state, body.base_version, body.records)?;
    ticks.sort_unstable();
    ticks.dedup();
    let t0 = state.merged.t0_ms;
    let frames: Vec<&LabelFrame> = ticks.iter().map(|&t| &state.merged.frames[(t - t0) as usize]).collect();
    Ok(Json(json!({ "version": version, "frames": frames })))
}

async fn export(State(app): State<Arc<AppState>>) -> ApiResult {
    let state = app.corrections.read().unwrap();
    Ok(Json(json!({ "version": state.version(), "labels": state.merged })))
}

/// Serves `state` on `addr` until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("session {} listening on http://{}", state.session.manifest.id, listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}

use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use flashcap_cli::service::{router, AppState};
use flashcap_cli::session;
use flashcap_core::{
    annotate_stream, apply_corrections, scenario, simulate, Correction, CorrectionAction, CorrectionSet, LabelSet,
    PipelineConfig, Source,
};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    path: std::path::PathBuf,
    app: axum::Router,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session");
    let out = simulate(&scenario("wave", 3).unwrap().truncated(400_000)).unwrap();
    let cfg = PipelineConfig::default();
    let labels = annotate_stream(&out.stream, &out.leds, &cfg).unwrap().labels;
    session::create(&path, &out.stream, &out.leds, &labels, &cfg).unwrap();
    let app = router(Arc::new(AppState::open(&path).unwrap()));
    Fixture { _dir: dir, path, app }
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn get(app: &axum::Router, uri: &str) -> Value {
    let (status, body) = call(app, "GET", uri, None).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {body}");
    body
}

fn record(t_ms: u64, led: &str, action: CorrectionAction) -> Correction {
    Correction { t_ms, led_id: led.into(), action, author: "ann".into(), created_at: 1 }
}

fn exported(body: &Value) -> LabelSet {
    serde_json::from_value(body["labels"].clone()).unwrap()
}

#[tokio::test]
async fn fresh_session_serves_auto_labels_only() {
    let f = fixture();
    let body = get(&f.app, "/labels").await;
    assert_eq!(body["version"], 0);
    let frames = body["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 400);
    let sources: Vec<&str> =
        frames.iter().flat_map(|fr| fr["joints"].as_object().unwrap().values().map(|j| j["source"].as_str().unwrap())).collect();
    assert!(!sources.is_empty());
    assert!(sources.iter().all(|s| *s == "auto"));
    let window = get(&f.app, "/labels?t0_ms=10&t1_ms=15").await;
    assert_eq!(window["frames"].as_array().unwrap().iter().map(|fr| fr["t_ms"].as_u64().unwrap()).collect::<Vec<_>>(), vec![10, 11, 12, 13, 14]);
}

#[tokio::test]
async fn move_then_export_shows_the_corrected_point() {
    let f = fixture();
    let moved = record(120, "right_wrist", CorrectionAction::Move { x: 12.5, y: 99.25 });
    let (status, body) = call(&f.app, "POST", "/corrections", Some(json!({ "records": [moved] }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["version"], 1);
    assert_eq!(body["frames"][0]["joints"]["right_wrist"], json!({ "x": 12.5, "y": 99.25, "source": "corrected" }));
    let labels = exported(&get(&f.app, "/export").await);
    let j = labels.frame(120).unwrap().joints["right_wrist"];
    assert_eq!((j.x, j.y, j.source), (12.5, 99.25, Source::Corrected));
}

#[tokio::test]
async fn export_equals_replaying_the_log() {
    let f = fixture();
    let clusters = get(&f.app, "/clusters?t_ms=200").await;
    let first = &clusters["clusters"][0];
    let centroid = (first["centroid"][0].as_f64().unwrap(), first["centroid"][1].as_f64().unwrap());
    let batches = [
        vec![record(50, "head", CorrectionAction::Delete), record(51, "left_knee", CorrectionAction::Move { x: 1.0, y: 2.0 })],
        vec![record(200, "left_ankle", CorrectionAction::Reassign { cluster: 0 })],
        vec![record(51, "left_knee", CorrectionAction::Move { x: 3.0, y: 4.0 }), record(399, "head", CorrectionAction::Delete)],
    ];
    for batch in &batches {
        let (status, body) = call(&f.app, "POST", "/corrections", Some(json!({ "records": batch }))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let body = get(&f.app, "/export").await;
    assert_eq!(body["version"], 5);

    let log = CorrectionSet::load(f.path.join("corrections.jsonl")).unwrap();
    assert_eq!(log.records, batches.concat());
    let auto = LabelSet::load(f.path.join("labels.flbl")).unwrap();
    let oracle = apply_corrections(&auto, &log, |t, c| ((t, c) == (200, 0)).then_some(centroid)).unwrap();
    assert_eq!(exported(&body), oracle);
    assert_eq!(oracle.frame(51).unwrap().joints["left_knee"].x, 3.0);

    let reopened = router(Arc::new(AppState::open(&f.path).unwrap()));
    assert_eq!(get(&reopened, "/export").await, body);
}

#[tokio::test]
async fn stale_writes_conflict_until_retried() {
    let f = fixture();
    let a = json!({ "base_version": 0, "records": [record(30, "head", CorrectionAction::Move { x: 1.0, y: 1.0 })] });
    assert_eq!(call(&f.app, "POST", "/corrections", Some(a)).await.0, StatusCode::OK);

    let b = |base: u64, x: f64| {
        json!({ "base_version": base, "records": [record(30, "head", CorrectionAction::Move { x, y: 2.0 })] })
    };
    let (status, body) = call(&f.app, "POST", "/corrections", Some(b(0, 7.0))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert_eq!(body["version"], 1);
    assert_eq!(body["conflicts"], json!([{ "t_ms": 30, "led_id": "head" }]));
    assert_eq!(get(&f.app, "/labels?t0_ms=30&t1_ms=31").await["frames"][0]["joints"]["head"]["x"], 1.0);

    let other = json!({ "base_version": 0, "records": [record(31, "head", CorrectionAction::Delete)] });
    assert_eq!(call(&f.app, "POST", "/corrections", Some(other)).await.0, StatusCode::OK);

    let (status, body) = call(&f.app, "POST", "/corrections", Some(b(2, 7.0))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["frames"][0]["joints"]["head"]["x"], 7.0);
    assert_eq!(CorrectionSet::load(f.path.join("corrections.jsonl")).unwrap().len(), 3);
}

#[tokio::test]
async fn invalid_corrections_are_rejected_without_logging() {
    let f = fixture();
    let cases = [
        (record(10_000, "head", CorrectionAction::Delete), StatusCode::NOT_FOUND, "UnknownTick"),
        (record(10, "tail", CorrectionAction::Delete), StatusCode::BAD_REQUEST, "UnknownLed"),
        (record(10, "head", CorrectionAction::Reassign { cluster: 999 }), StatusCode::BAD_REQUEST, "UnknownCluster"),
    ];
    for (r, status, kind) in cases {
        let (got, body) = call(&f.app, "POST", "/corrections", Some(json!({ "records": [r] }))).await;
        assert_eq!((got, body["error"].as_str().unwrap()), (status, kind), "{body}");
    }
    assert!(!f.path.join("corrections.jsonl").exists());
    assert_eq!(get(&f.app, "/session").await["version"], 0);
}

#[tokio::test]
async fn rasters_count_every_event() {
    let f = fixture();
    let stream = flashcap_core::event::read_event_file(f.path.join("stream.fevt")).unwrap();
    let body = get(&f.app, "/frames?t0_ms=100&t1_ms=110").await;
    let width = body["width"].as_u64().unwrap();
    let frames = body["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 10);
    for (k, frame) in frames.iter().enumerate() {
        let t_ms = 100 + k as u64;
        let mut expected = std::collections::BTreeMap::new();
        for e in stream.window(t_ms * 1000, (t_ms + 1) * 1000) {
            let c = expected.entry(u64::from(e.y) * width + u64::from(e.x)).or_insert((0u64, 0u64));
            if e.polarity.bit() == 1 { c.0 += 1 } else { c.1 += 1 }
        }
        let mut decoded = std::collections::BTreeMap::new();
        for run in frame["runs"].as_array().unwrap() {
            let r: Vec<u64> = run.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
            assert!(r[1] >= 1 && r[2] + r[3] >= 1);
            for px in r[0]..r[0] + r[1] {
                assert!(decoded.insert(px, (r[2], r[3])).is_none());
            }
        }
        assert_eq!(decoded, expected, "tick {t_ms}");
        assert_eq!(frame["event_count"].as_u64().unwrap(), expected.values().map(|(a, b)| a + b).sum::<u64>());
    }
}

#[tokio::test]
async fn scrubbing_a_hundred_milliseconds_is_fast() {
    let f = fixture();
    let start = Instant::now();
    get(&f.app, "/frames?t0_ms=250&t1_ms=350").await;
    assert!(start.elapsed().as_millis() < 200, "{:?}", start.elapsed());
}

#[tokio::test]
async fn clusters_carry_signatures_and_costs() {
    let f = fixture();
    let body = get(&f.app, "/clusters?t_ms=300").await;
    let leds = body["led_ids"].as_array().unwrap().len();
    let clusters = body["clusters"].as_array().unwrap();
    assert!(clusters.len() >= 10);
    for c in clusters {
        assert_eq!(c["costs"].as_array().unwrap().len(), leds);
    }
    let matched: Vec<&Value> = clusters.iter().filter(|c| c["led"].is_string()).collect();
    assert!(!matched.is_empty());
    for c in matched {
        assert!(c["signature"]["period_us"].as_f64().unwrap() > 0.0);
        assert!(c["cost"].as_f64().unwrap() <= body["d_max"].as_f64().unwrap());
    }
}

#[tokio::test]
async fn bad_requests() {
    let f = fixture();
    assert_eq!(call(&f.app, "GET", "/frames?t0_ms=5", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&f.app, "GET", "/frames?t0_ms=0&t1_ms=5000", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&f.app, "GET", "/frames?t0_ms=9000&t1_ms=9001", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&f.app, "GET", "/clusters?t_ms=9000", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&f.app, "GET", "/labels?t0_ms=20&t1_ms=10", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&f.app, "GET", "/sessions/other", None).await.0, StatusCode::NOT_FOUND);
    let session = get(&f.app, "/session").await;
    assert_eq!(session["label_ticks"], json!([0, 400]));
    assert_eq!(session["leds"].as_array().unwrap().len(), 17);
}

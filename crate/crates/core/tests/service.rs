use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use frnf::mapper::MapperConfig;
use frnf::scene_field::FieldConfig;
use frnf::service::{router, Phase, ServiceHandle};
use frnf::simio::{generate_sequence, standard_fixture, Dataset};

fn spawn(dir: &std::path::Path) -> Arc<ServiceHandle> {
    let (scene, spec) = standard_fixture("single_frame", 3).unwrap();
    generate_sequence(&spec, &scene, dir).unwrap();
    let ds = Dataset::open(dir).unwrap();
    let field_cfg = FieldConfig {
        feature_dim: ds.manifest.feature_dim,
        ..FieldConfig::default()
    }
    .with_hidden(16);
    // never finishes on its own, so pause/step stay reachable
    let cfg = MapperConfig {
        steps_per_frame: 1_000_000,
        ..MapperConfig::default()
    };
    ServiceHandle::spawn(ds, field_cfg, cfg, 50.0).unwrap()
}

async fn call(h: &Arc<ServiceHandle>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(h.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn json_of(h: &Arc<ServiceHandle>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(h, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn png_size(bytes: &[u8]) -> (u32, u32) {
    let dec = png::Decoder::new(std::io::Cursor::new(bytes));
    let r = dec.read_info().unwrap();
    (r.info().width, r.info().height)
}

async fn wait_for_snapshot(h: &Arc<ServiceHandle>) {
    let t = Instant::now();
    while h.state().n_keyframes == 0 {
        assert!(t.elapsed() < Duration::from_secs(30), "no keyframe after 30 s");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn idle_session_rejects_render_and_clicks() {
    let dir = tempfile::tempdir().unwrap();
    let h = spawn(dir.path());

    let (s, st) = json_of(&h, "GET", "/state", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(st["phase"], "idle");
    assert_eq!(st["snapshot_id"], 0);
    assert_eq!(st["n_frames"], 1);

    let (s, body) = json_of(&h, "GET", "/render?mode=depth", None).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert!(body["error"].is_string());

    let (s, _) = json_of(&h, "POST", "/clicks", Some(json!({"keyframe_id": 0, "u": 10, "v": 10, "name": "a"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, _) = json_of(&h, "POST", "/control", Some(json!({"action": "pause"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = json_of(&h, "POST", "/control", Some(json!({"action": "jump"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&h, "POST", "/control", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, kfs) = json_of(&h, "GET", "/keyframes", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(kfs, json!([]));
    h.shutdown();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn running_session_serves_everything() {
    let dir = tempfile::tempdir().unwrap();
    let h = spawn(dir.path());

    let (s, st) = json_of(&h, "POST", "/control", Some(json!({"action": "start"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(st["phase"], "running");
    let (s, _) = json_of(&h, "POST", "/control", Some(json!({"action": "start"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    wait_for_snapshot(&h).await;

    let (s, st) = json_of(&h, "POST", "/control", Some(json!({"action": "pause"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(st["phase"], "paused");
    let before = st["step"].as_u64().unwrap();
    let (s, st) = json_of(&h, "POST", "/control", Some(json!({"action": "step"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(st["step"].as_u64().unwrap(), before + 1);
    assert_eq!(h.state().phase, Phase::Paused);

    let (s, kfs) = json_of(&h, "GET", "/keyframes", None).await;
    assert_eq!(s, StatusCode::OK);
    let kfs = kfs.as_array().unwrap().clone();
    assert_eq!(kfs.len(), 1);
    assert_eq!(kfs[0]["frame_id"], 0);
    assert_eq!(kfs[0]["pose"].as_array().unwrap().len(), 16);

    let (s, _) = json_of(&h, "POST", "/clicks", Some(json!({"keyframe_id": 7, "u": 10, "v": 10, "name": "a"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = json_of(&h, "POST", "/clicks", Some(json!({"keyframe_id": 0, "u": 10000, "v": 10, "name": "a"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = json_of(&h, "POST", "/clicks", Some(json!({"keyframe_id": 0, "u": "x"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, r) = json_of(&h, "POST", "/clicks", Some(json!({"keyframe_id": 0, "u": 80, "v": 60, "name": "thing"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["class_id"], 0);
    let (_, st) = json_of(&h, "GET", "/state", None).await;
    assert_eq!(st["n_active_classes"], 1);
    assert_eq!(st["class_names"], json!(["thing"]));

    let cam = h.snapshot().unwrap().cam;
    for (mode, stride) in [("depth", 1), ("semantic", 2), ("feature", 4)] {
        let (s, bytes) = call(&h, "GET", &format!("/render?mode={mode}&stride={stride}"), None).await;
        assert_eq!(s, StatusCode::OK, "{mode}");
        let (w, hgt) = png_size(&bytes);
        assert_eq!(w as usize, cam.width.div_ceil(stride), "{mode}");
        assert_eq!(hgt as usize, cam.height.div_ceil(stride), "{mode}");
    }
    let eye = "1,0,0,0,0,1,0,0,0,0,1,-3,0,0,0,1";
    let (s, _) = call(&h, "GET", &format!("/render?mode=depth&stride=8&pose={eye}"), None).await;
    assert_eq!(s, StatusCode::OK);
    for bad in ["/render?mode=normals", "/render?stride=0", "/render?pose=1,2,3"] {
        let (s, _) = call(&h, "GET", bad, None).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}");
    }

    let (s, body) = call(&h, "GET", "/metrics?n=5", None).await;
    assert_eq!(s, StatusCode::OK);
    let lines: Vec<&str> = std::str::from_utf8(&body).unwrap().lines().collect();
    assert!(!lines.is_empty() && lines.len() <= 5);
    for l in lines {
        let v: Value = serde_json::from_str(l).unwrap();
        assert!(v["step"].is_u64());
    }
    let (s, _) = call(&h, "GET", "/metrics?n=lots", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, st) = json_of(&h, "POST", "/control", Some(json!({"action": "resume"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(st["phase"], "running");
    h.shutdown();
}

use std::sync::OnceLock;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use sdr_core::encoder::EncoderModel;
use sdr_core::harness::{DatasetConfig, ExperimentConfig};
use sdr_service::{router, AppState, Dataset, ServiceConfig, SliceDetail, SliceSummary};

fn dataset() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| {
        Dataset::synthetic(&ExperimentConfig {
            n_phantoms: 2,
            accelerations: vec![4.0, 8.0],
            dataset: DatasetConfig {
                size: 64,
                ..DatasetConfig::default()
            },
            ..ExperimentConfig::default()
        })
        .unwrap()
    })
}

fn state(cfg: ServiceConfig) -> AppState {
    AppState::new(dataset().clone(), EncoderModel::reference(0), cfg).unwrap()
}

async fn send(app: axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_sdr(body: &Value) -> Request<Body> {
    Request::post("/sdr")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn job(n_rec: usize, n_opt: usize) -> Value {
    let id = &dataset().slices()[1].id;
    json!({"slice_id": id, "boxes": [[20.0, 20.0, 36.0, 36.0]], "n_rec": n_rec, "n_opt": n_opt, "radius": 3.0, "seed": 4})
}

fn is_png(b64: &str) -> bool {
    STANDARD.decode(b64).unwrap().starts_with(b"\x89PNG\r\n\x1a\n")
}

#[tokio::test]
async fn empty_dataset_lists_nothing() {
    let st = AppState::new(Dataset::default(), EncoderModel::reference(0), ServiceConfig::default()).unwrap();
    let (status, body) = send(router(st), get("/slices")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap(), json!([]));
}

#[tokio::test]
async fn listing_is_stable_and_complete() {
    let app = router(state(ServiceConfig::default()));
    let (s1, b1) = send(app.clone(), get("/slices")).await;
    let (s2, b2) = send(app, get("/slices")).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(b1, b2);
    let list: Vec<SliceSummary> = serde_json::from_slice(&b1).unwrap();
    let ids: Vec<&str> = list.iter().map(|s| s.slice_id.as_str()).collect();
    assert_eq!(ids, ["p000-x4", "p000-x8", "p001-x4", "p001-x8"]);
    assert!(list.iter().all(|s| is_png(&s.thumbnail)));
}

#[tokio::test]
async fn slice_detail_hides_ground_truth_outside_demo_mode() {
    let id = dataset().slices()[0].id.clone();
    let (status, body) = send(router(state(ServiceConfig::default())), get(&format!("/slice/{id}"))).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert!(v.get("ground_truth").is_none());
    let d: SliceDetail = serde_json::from_value(v).unwrap();
    assert_eq!((d.width, d.height, d.acceleration), (64, 64, 4.0));
    assert!(is_png(&d.image));

    let demo = ServiceConfig {
        demo_mode: true,
        ..ServiceConfig::default()
    };
    let (_, body) = send(router(state(demo)), get(&format!("/slice/{id}"))).await;
    let d: SliceDetail = serde_json::from_slice(&body).unwrap();
    assert_eq!(d.ground_truth.unwrap(), dataset().slices()[0].ground_truth);
}

#[tokio::test]
async fn unknown_slice_is_404_with_body() {
    let app = router(state(ServiceConfig::default()));
    let (status, body) = send(app.clone(), get("/slice/nope")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert!(v["error"].as_str().unwrap().contains("nope"));
    let (status, _) = send(app, post_sdr(&json!({"slice_id": "nope", "boxes": [[1, 1, 5, 5]]}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sdr_job_returns_n_rec_consistent_images_deterministically() {
    let app = router(state(ServiceConfig::default()));
    let (status, body) = send(app.clone(), post_sdr(&job(3, 4))).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let mut v: Value = serde_json::from_slice(&body).unwrap();
    let recons = v["reconstructions"].as_array().unwrap();
    assert_eq!(recons.len(), 3);
    for r in recons {
        assert!(is_png(r["image"].as_str().unwrap()));
        assert!(r["consistency_residual"].as_f64().unwrap() < 1e-2);
        assert!(r["distance_to_initial"].as_f64().unwrap() <= 3.0 + 1e-9);
    }
    let m = v["diversity_matrix"].as_array().unwrap();
    assert_eq!(m.len(), 3);
    assert!(m.iter().all(|row| row.as_array().unwrap().len() == 3));
    assert!(v["merged_detections"].is_array());

    let (_, again) = send(app, post_sdr(&job(3, 4))).await;
    let mut w: Value = serde_json::from_slice(&again).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    w.as_object_mut().unwrap().remove("timing");
    assert_eq!(serde_json::to_vec(&v).unwrap(), serde_json::to_vec(&w).unwrap());
}

#[tokio::test]
async fn invalid_requests_are_422() {
    let app = router(state(ServiceConfig::default()));
    let id = dataset().slices()[0].id.clone();
    let mut empty = job(3, 2);
    empty["boxes"] = json!([]);
    let (status, _) = send(app.clone(), post_sdr(&empty)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let bad = json!({"slice_id": id, "boxes": [[1, 1, 8, 8], [10, 10, 5, 12], [60, 60, 70, 70]]});
    let (status, body) = send(app.clone(), post_sdr(&bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_slice(&body).unwrap();
    let idx: Vec<u64> = v["invalid_boxes"].as_array().unwrap().iter().map(|b| b["index"].as_u64().unwrap()).collect();
    assert_eq!(idx, [1, 2]);

    for (n_rec, n_opt) in [(100, 10), (1, 10), (3, 201)] {
        let (status, _) = send(app.clone(), post_sdr(&job(n_rec, n_opt))).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "n_rec {n_rec}, n_opt {n_opt}");
    }
    let mut r = job(3, 2);
    r["radius"] = json!(-1.0);
    assert_eq!(send(app.clone(), post_sdr(&r)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let malformed = Request::post("/sdr")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{\"slice_id\": 3"))
        .unwrap();
    assert_eq!(send(app, malformed).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn busy_pool_answers_429() {
    let st = state(ServiceConfig::default());
    let _held = st.permits.clone().acquire_many_owned(2).await.unwrap();
    let (status, body) = send(router(st), post_sdr(&job(2, 1))).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert!(serde_json::from_slice::<Value>(&body).unwrap()["error"].is_string());
}

#[tokio::test]
async fn exhausted_budget_answers_408_with_progress() {
    let st = state(ServiceConfig {
        budget: Duration::ZERO,
        ..ServiceConfig::default()
    });
    let (status, body) = send(router(st.clone()), post_sdr(&job(3, 20))).await;
    assert_eq!(status, StatusCode::REQUEST_TIMEOUT);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["completed_iterations"], json!(0));
    assert_eq!(v["total_iterations"], json!(20));
    assert_eq!(st.permits.available_permits(), 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn reads_are_served_while_a_job_runs() {
    let app = router(state(ServiceConfig::default()));
    let running = tokio::spawn(send(app.clone(), post_sdr(&job(4, 30))));
    for _ in 0..5 {
        assert_eq!(send(app.clone(), get("/slices")).await.0, StatusCode::OK);
    }
    assert_eq!(running.await.unwrap().0, StatusCode::OK);
}

#[tokio::test]
async fn cors_headers_are_sent() {
    let app = router(state(ServiceConfig::default()));
    let req = Request::get("/slices")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
}

#[tokio::test]
async fn loads_gen_data_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        n_phantoms: 1,
        accelerations: vec![8.0],
        dataset: DatasetConfig {
            size: 32,
            ..DatasetConfig::default()
        },
        ..ExperimentConfig::default()
    };
    sdr_core::harness::write_dataset(&cfg, dir.path()).unwrap();
    let loaded = Dataset::load(dir.path()).unwrap();
    let fresh = Dataset::synthetic(&cfg).unwrap();
    assert_eq!(loaded.len(), 1);
    let (a, b) = (&loaded.slices()[0], &fresh.slices()[0]);
    assert_eq!(a.id, b.id);
    assert_eq!(a.ground_truth, b.ground_truth);
    assert!(a.initial.distance(&b.initial) <= 1e-9 * b.initial.norm());
}

use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use packlab_core::par::Parallelism;
use packlab_core::store::Store;
use packlab_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

const RECIPE: &str = r#"{
  "name": "tiles",
  "volume": {"mode": "plane2d", "extents": [60, 60, 0]},
  "defaults": {"grid_spacing": 2},
  "ingredients": [
    {"name": "big", "radius": 6, "count": 6},
    {"name": "small", "radius": 3, "count": 10, "partners": [{"name": "big", "binding_distance": 12}]}
  ]
}"#;

fn experiment() -> Value {
    json!({
        "format_version": 1,
        "recipe": "tiles.json",
        "specs": [
            {"target": "ingredient.small.nb_jitter", "kind": "integer",
             "domain": {"lo": 1, "hi": 30}, "method": {"even": 2}},
            {"target": "ingredient.small.partner.big.weight", "kind": "numeric",
             "domain": {"lo": 0, "hi": 1}, "method": {"even": 2}}
        ],
        "n_configs": 4,
        "r_seeds": 2,
        "base_seed": 3,
        "density_dims": [8, 8, 1]
    })
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn send_json(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let (s, b) = send(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn app(dir: &std::path::Path) -> Router {
    router(AppState::new(Store::open(dir).unwrap(), Parallelism::Auto))
}

async fn finished_experiment(app: &Router) -> String {
    let (s, _) = send_json(app, "POST", "/api/recipes", Some(RECIPE.into())).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, created) = send_json(app, "POST", "/api/experiments", Some(experiment().to_string())).await;
    assert_eq!(s, StatusCode::CREATED, "{created}");
    assert_eq!(created["status"], "created");
    assert_eq!(created["total_jobs"], 8);
    let id = created["id"].as_str().unwrap().to_string();
    let (s, _) = send_json(app, "POST", &format!("/api/experiments/{id}/run"), None).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    for _ in 0..600 {
        let (_, st) = send_json(app, "GET", &format!("/api/experiments/{id}/status"), None).await;
        if st["status"] == "done" {
            return id;
        }
        assert_ne!(st["status"], "failed", "{st}");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("experiment did not finish");
}

fn enc(v: &Value) -> String {
    serde_urlencoded::to_string([("filters", v.to_string())]).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn fresh_store_lists_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (s, v) = send_json(&app, "GET", "/api/experiments", None).await;
    assert_eq!((s, v), (StatusCode::OK, json!([])));
    let (s, v) = send_json(&app, "GET", "/api/recipes", None).await;
    assert_eq!((s, v), (StatusCode::OK, json!([])));
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_use_the_error_envelope() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (s, v) = send_json(&app, "GET", "/api/experiments/0123456789abcdef/status", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "not_found");
    let bad = RECIPE.replace("\"radius\": 6", "\"radius\": -6");
    let (s, v) = send_json(&app, "POST", "/api/recipes", Some(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"]["message"].as_str().unwrap().contains("radius"));
    let (s, _) = send_json(&app, "POST", "/api/experiments", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = send_json(&app, "GET", "/api/nothing/here", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn analysis_routes_after_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = finished_experiment(&app).await;

    let (s, dims) = send_json(&app, "GET", &format!("/api/experiments/{id}/dimensions"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(dims["runs"], 4);
    let names: Vec<&str> = dims["dimensions"].as_array().unwrap().iter().map(|d| d["name"].as_str().unwrap()).collect();
    for n in ["ingredient.small.nb_jitter", "ingredient.small.partner.big.weight", "usage", "runtime", "space_occupancy"] {
        assert!(names.contains(&n), "{n} missing from {names:?}");
    }

    // No filters: filtered counts equal full counts.
    let (s, h) = send_json(&app, "GET", &format!("/api/experiments/{id}/histogram?dim=usage&bins=10"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["full_counts"], h["filtered_counts"]);
    assert_eq!(h["full_counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>(), 4);

    let f = json!({"ingredient.small.nb_jitter": {"range": [30, 30]}});
    let (_, runs) = send_json(&app, "GET", &format!("/api/experiments/{id}/runs?{}", enc(&f)), None).await;
    let runs = runs.as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert!(runs.iter().all(|r| r["seeds"].as_array().unwrap().len() == 2));
    let (_, h) = send_json(
        &app,
        "GET",
        &format!("/api/experiments/{id}/histogram?dim=ingredient.small.nb_jitter&{}", enc(&f)),
        None,
    )
    .await;
    assert_eq!(h["full_counts"], h["filtered_counts"], "own filter is excluded");

    let (s, _) = send_json(&app, "GET", &format!("/api/experiments/{id}/histogram?dim=nope"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, pgm) = send(&app, "GET", &format!("/api/experiments/{id}/runs/0/heatmap?axis=z&mode=small"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
    assert_eq!(pgm.len(), 11 + 64);
    let (s, _) = send(&app, "GET", &format!("/api/experiments/{id}/runs/0/heatmap?axis=w"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, out) = send_json(&app, "GET", &format!("/api/experiments/{id}/runs/1/outputs/0"), None).await;
    assert_eq!(s, StatusCode::OK);
    let placed: u64 = out["placed_counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(out["instances"].as_array().unwrap().len() as u64, placed);
    assert!(out["assignment"].get("ingredient.small.nb_jitter").is_some());
    let (_, proxy) = send_json(&app, "GET", &format!("/api/experiments/{id}/runs/1/outputs/0?proxy=true"), None).await;
    for (a, b) in out["instances"].as_array().unwrap().iter().zip(proxy["instances"].as_array().unwrap()) {
        assert_eq!(a["position"], b["position"]);
        assert_eq!(a["radius"], b["radius"]);
    }
    let (s, _) = send_json(&app, "GET", &format!("/api/experiments/{id}/runs/1/outputs/9"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    // Identical GETs give identical bodies.
    let uri = format!("/api/experiments/{id}/histogram?dim=runtime");
    assert_eq!(send(&app, "GET", &uri, None).await, send(&app, "GET", &uri, None).await);
}

#[tokio::test(flavor = "multi_thread")]
async fn second_run_request_conflicts() {
    let tmp = tempfile::tempdir().unwrap();
    let store = Store::open(tmp.path()).unwrap();
    let app = app(tmp.path());
    let (_, created) = send_json(&app, "POST", "/api/recipes", Some(RECIPE.into())).await;
    assert_eq!(created["name"], "tiles");
    let (_, created) = send_json(&app, "POST", "/api/experiments", Some(experiment().to_string())).await;
    let id = created["id"].as_str().unwrap().to_string();
    // A run marker left by another process counts as running.
    store.mark_running(&id).unwrap();
    let (s, v) = send_json(&app, "POST", &format!("/api/experiments/{id}/run"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "conflict");
    let (s, _) = send_json(&app, "GET", &format!("/api/experiments/{id}/dimensions"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn static_files_are_served() {
    let tmp = tempfile::tempdir().unwrap();
    let web = tempfile::tempdir().unwrap();
    std::fs::write(web.path().join("index.html"), "<html>ok</html>").unwrap();
    let app = router(AppState::new(Store::open(tmp.path()).unwrap(), Parallelism::Sequential).with_static_dir(web.path()));
    let (s, body) = send(&app, "GET", "/index.html", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"<html>ok</html>");
    let (s, _) = send_json(&app, "GET", "/api/experiments", None).await;
    assert_eq!(s, StatusCode::OK);
}

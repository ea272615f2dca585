use std::collections::BTreeMap;
use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use packlab_core::density::{self, Axis};
use packlab_core::params::apply_assignment;
use packlab_core::recipe::{parse_recipe, Recipe};
use packlab_core::runner::{self, RunOptions};
use packlab_core::sampler::ExperimentConfig;
use packlab_core::store::{ExperimentRecord, Status};
use packlab_core::xfilter::{self, Predicate, RowGroup, Table};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::{ApiError, AppState};

type ApiResult<T> = Result<T, ApiError>;

pub fn build(state: AppState) -> Router {
    let static_dir = state.inner.static_dir.clone();
    let api = Router::new()
        .route("/api/recipes", get(list_recipes).post(create_recipe))
        .route("/api/experiments", get(list_experiments).post(create_experiment))
        .route("/api/experiments/{id}", get(experiment_status))
        .route("/api/experiments/{id}/run", post(start_run))
        .route("/api/experiments/{id}/status", get(experiment_status))
        .route("/api/experiments/{id}/dimensions", get(dimensions))
        .route("/api/experiments/{id}/histogram", get(histogram))
        .route("/api/experiments/{id}/runs", get(matching_runs))
        .route("/api/experiments/{id}/runs/{n}/heatmap", get(heatmap))
        .route("/api/experiments/{id}/runs/{n}/outputs/{r}", get(output_detail))
        .route("/api/{*rest}", axum::routing::any(|| async { ApiError::not_found("no such route") }));
    let api = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::not_found("no such route") }),
    };
    api.with_state(state)
}

fn parse_json(body: &Bytes) -> ApiResult<String> {
    std::str::from_utf8(body)
        .map(str::to_string)
        .map_err(|_| ApiError::bad_request("request body must be UTF-8"))
}

async fn list_recipes(State(st): State<AppState>) -> ApiResult<Json<Vec<Recipe>>> {
    Ok(Json(st.store().list_recipes()?))
}

async fn create_recipe(State(st): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let recipe = parse_recipe(&parse_json(&body)?)?;
    st.store().save_recipe(&recipe)?;
    Ok((StatusCode::CREATED, Json(json!({ "name": recipe.name }))).into_response())
}

async fn list_experiments(State(st): State<AppState>) -> ApiResult<Json<Vec<ExperimentRecord>>> {
    Ok(Json(st.store().list_experiments()?))
}

/// Accepts an experiment document; a string `recipe` names a file in the recipes directory.
async fn create_experiment(State(st): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let text = parse_json(&body)?;
    let recipes = st.store().root().join("recipes");
    let cfg = ExperimentConfig::from_document(&text, Some(&recipes))?;
    let rec = st.store().save_experiment(&cfg)?;
    Ok((StatusCode::CREATED, Json(rec)).into_response())
}

async fn experiment_status(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let rec = st.store().status(&id)?;
    let mut v = serde_json::to_value(&rec).map_err(|e| ApiError::internal(e.to_string()))?;
    if rec.status == Status::Failed {
        v["message"] = json!(st.store().failure_message(&id));
    }
    Ok(Json(v))
}

async fn start_run(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let rec = st.store().status(&id)?;
    let progress = Arc::new(AtomicUsize::new(0));
    {
        let mut running = st.inner.running.lock().expect("lock");
        if running.contains_key(&id) || st.store().state_dir(&id).join("running").exists() {
            return Err(ApiError::conflict(format!("experiment {id} is already running")));
        }
        running.insert(id.clone(), progress.clone());
    }
    st.inner.tables.write().expect("lock").remove(&id);
    st.store().mark_running(&id)?;
    let worker = st.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || {
        let opts = RunOptions { parallelism: worker.inner.parallelism, progress: Some(progress) };
        if let Err(e) = runner::run_experiment(worker.store(), &job_id, &opts) {
            tracing::error!("experiment {job_id} failed: {e}");
        }
        worker.inner.running.lock().expect("lock").remove(&job_id);
    });
    let total = rec.total_jobs;
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id, "status": "running", "total_jobs": total })))
        .into_response())
}

fn table(st: &AppState, id: &str) -> ApiResult<Arc<Table>> {
    if let Some(t) = st.inner.tables.read().expect("lock").get(id) {
        return Ok(t.clone());
    }
    let rec = st.store().status(id)?;
    if rec.status != Status::Done {
        return Err(ApiError::conflict(format!("experiment {id} has no results yet (status {:?})", rec.status)));
    }
    let records = st.store().read_runs_table(id)?;
    let t = Arc::new(xfilter::load_records(&records)?.with_parallelism(st.inner.parallelism));
    st.inner.tables.write().expect("lock").insert(id.to_string(), t.clone());
    Ok(t)
}

async fn dimensions(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let t = table(&st, &id)?;
    Ok(Json(json!({ "runs": t.len(), "dimensions": t.dimensions() })))
}

/// `filters` is URL-encoded JSON: either a map from dimension to predicate or
/// a full row object with a `filters` field.
fn parse_filters(raw: Option<&str>) -> ApiResult<RowGroup> {
    let Some(raw) = raw.filter(|s| !s.trim().is_empty()) else {
        return Ok(RowGroup::new());
    };
    let v: Value = serde_json::from_str(raw).map_err(|e| ApiError::bad_request(format!("filters: {e}")))?;
    if v.get("filters").is_some() {
        serde_json::from_value(v).map_err(|e| ApiError::bad_request(format!("filters: {e}")))
    } else {
        let filters: BTreeMap<String, Predicate> =
            serde_json::from_value(v).map_err(|e| ApiError::bad_request(format!("filters: {e}")))?;
        Ok(RowGroup { row_id: None, filters })
    }
}

#[derive(Deserialize)]
struct HistogramQuery {
    dim: Option<String>,
    bins: Option<usize>,
    filters: Option<String>,
}

async fn histogram(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HistogramQuery>,
) -> ApiResult<Json<xfilter::Histogram>> {
    let dim = q.dim.ok_or_else(|| ApiError::bad_request("missing query parameter `dim`"))?;
    let bins = q.bins.unwrap_or(xfilter::DEFAULT_BINS);
    if bins == 0 {
        return Err(ApiError::bad_request("bins must be >= 1"));
    }
    let row = parse_filters(q.filters.as_deref())?;
    let t = table(&st, &id)?;
    Ok(Json(t.histogram(&row, &dim, bins)?))
}

#[derive(Deserialize)]
struct RunsQuery {
    filters: Option<String>,
}

async fn matching_runs(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RunsQuery>,
) -> ApiResult<Json<Vec<xfilter::MatchingRun>>> {
    let row = parse_filters(q.filters.as_deref())?;
    Ok(Json(table(&st, &id)?.list_matching_runs(&row)?))
}

#[derive(Deserialize)]
struct HeatmapQuery {
    axis: Option<String>,
    mode: Option<String>,
}

async fn heatmap(
    State(st): State<AppState>,
    Path((id, n)): Path<(String, u32)>,
    Query(q): Query<HeatmapQuery>,
) -> ApiResult<Response> {
    let axis_name = q.axis.as_deref().unwrap_or("z");
    let axis = Axis::parse(axis_name).ok_or_else(|| ApiError::bad_request(format!("axis must be x, y or z, got {axis_name}")))?;
    let vol = st.store().load_density(&id, n)?;
    let channel = match q.mode.as_deref() {
        None | Some("combined") => None,
        Some(name) => Some(name),
    };
    let values = vol
        .channel(channel)
        .ok_or_else(|| ApiError::bad_request(format!("unknown heatmap mode {:?}", channel.unwrap_or_default())))?;
    let img = density::project_channel(&vol, values, axis);
    let max = img.max();
    Ok((
        [
            (header::CONTENT_TYPE, "image/x-portable-graymap".to_string()),
            (header::HeaderName::from_static("x-normalization-max"), max.to_string()),
        ],
        img.to_pgm(),
    )
        .into_response())
}

#[derive(Deserialize)]
struct OutputQuery {
    #[serde(default)]
    proxy: bool,
}

async fn output_detail(
    State(st): State<AppState>,
    Path((id, n, r)): Path<(String, u32, u32)>,
    Query(q): Query<OutputQuery>,
) -> ApiResult<Json<Value>> {
    let cfg = st.store().load_experiment(&id)?;
    let out = st.store().load_output(&id, n, r)?;
    let effective = apply_assignment(&cfg.recipe, &out.config_ref.assignment)?;
    // Instances are spheres, so the bounding-sphere proxy has the same geometry.
    let shape = if q.proxy { "bounding_sphere" } else { "sphere" };
    let instances: Vec<Value> = out
        .instances
        .iter()
        .map(|i| json!({ "ingredient": i.ingredient, "position": i.position, "radius": i.radius, "shape": shape }))
        .collect();
    Ok(Json(json!({
        "run_index": n,
        "seed_index": r,
        "seed": out.seed,
        "proxy": q.proxy,
        "assignment": out.config_ref.assignment,
        "configuration": {
            "volume": effective.volume,
            "defaults": effective.defaults,
            "ingredients": effective.ingredients,
        },
        "instances": instances,
        "placed_counts": out.placed_counts,
        "requested_counts": out.requested_counts,
        "runtime_seconds": out.runtime_seconds,
    })))
}

//! HTTP API over analysis sessions. Fits run in the background; clients poll
//! `/status` and get 409 from query endpoints until the session is ready.

mod error;
mod state;

use std::collections::{BTreeMap, HashMap};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use ndarray::ArrayView1;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use xmap_core::dataset::DatasetSummary;
use xmap_core::session::{session_id, DiagnosticsSummary, PcaReport};
use xmap_core::{
    AnalysisSession, ColorMode, ContributionReport, CsvOptions, Dataset, Histogram, PreprocessMode,
    UmapConfig, VoronoiDiagram,
};

pub use error::{ApiError, ErrorBody, ERROR_CODES};
pub use state::{AppState, ServerConfig, SESSION_EXTENSION};

use state::SlotState;

/// `max_pcs` used when a fit request leaves it out, before clamping to the
/// data's rank bound.
pub const DEFAULT_MAX_PCS: usize = 10;
pub const DEFAULT_BINS: usize = 20;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let limit = state.config().max_body_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(dataset_summary))
        .route("/sessions", post(create_session))
        .route("/sessions/import", post(import_session))
        .route("/sessions/{id}", get(session_summary))
        .route("/sessions/{id}/status", get(status))
        .route("/sessions/{id}/file", get(session_file))
        .route("/sessions/{id}/pca", get(pca))
        .route("/sessions/{id}/components", put(set_components))
        .route("/sessions/{id}/diagnostics", get(diagnostics))
        .route("/sessions/{id}/voronoi", get(voronoi))
        .route("/sessions/{id}/color", get(color))
        .route("/sessions/{id}/selections", post(create_selection).get(list_selections))
        .route("/sessions/{id}/selections/{name}", delete(delete_selection))
        .route("/sessions/{id}/compare", post(compare))
        .route("/sessions/{id}/histogram", get(histogram))
        .route("/sessions/{id}/transform", post(transform))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn query(q: Result<Query<HashMap<String, String>>, QueryRejection>) -> ApiResult<HashMap<String, String>> {
    q.map(|Query(m)| m).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn flag(q: &HashMap<String, String>, key: &str, default: bool) -> ApiResult<bool> {
    match q.get(key).map(String::as_str) {
        None => Ok(default),
        Some("true" | "1" | "yes") => Ok(true),
        Some("false" | "0" | "no") => Ok(false),
        Some(other) => Err(ApiError::bad_request(format!("{key} must be true or false, got {other:?}"))),
    }
}

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect()
}

async fn health() -> Json<Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetCreated {
    pub dataset_id: String,
    pub summary: DatasetSummary,
}

/// `POST /datasets?delimiter=,&preprocessing=center|autoscale&header=true&id_column=name`
async fn upload_dataset(
    State(st): State<AppState>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<DatasetCreated>)> {
    let q = query(q)?;
    let delimiter = match q.get("delimiter").map(String::as_str) {
        None | Some("") => b',',
        Some("tab" | "\\t" | "\t") => b'\t',
        Some(s) if s.len() == 1 && s.is_ascii() => s.as_bytes()[0],
        Some(s) => return Err(ApiError::bad_request(format!("delimiter must be one ASCII character, got {s:?}"))),
    };
    let mode: PreprocessMode = match q.get("preprocessing") {
        None => PreprocessMode::Center,
        Some(s) => s.parse()?,
    };
    let options = CsvOptions {
        delimiter,
        has_header: flag(&q, "header", true)?,
        id_column: q.get("id_column").cloned(),
    };
    let dataset = Dataset::load_csv(&body[..], &options)?.preprocess(mode)?;
    let summary = dataset.summary();
    let settings = format!("{}|{}|{:?}|{}", delimiter, options.has_header, options.id_column, summary.preprocessing);
    let id = short_hash(&[&body, settings.as_bytes()]);
    st.insert_dataset(id.clone(), dataset);
    Ok((StatusCode::CREATED, Json(DatasetCreated { dataset_id: id, summary })))
}

async fn dataset_summary(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DatasetSummary>> {
    Ok(Json(st.dataset(&id)?.summary()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset_id: String,
    /// Partial [`UmapConfig`]; missing fields take their defaults and a
    /// missing seed takes the server's default seed.
    #[serde(default)]
    pub umap: Option<Value>,
    #[serde(default)]
    pub max_pcs: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub state: String,
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req: CreateSession = parse_json(&body)?;
    let dataset = st.dataset(&req.dataset_id)?;
    let mut umap = match req.umap {
        None | Some(Value::Null) => serde_json::Map::new(),
        Some(Value::Object(m)) => m,
        Some(_) => return Err(ApiError::bad_request("umap must be an object")),
    };
    umap.entry("seed").or_insert_with(|| Value::from(st.config().default_seed));
    let cfg: UmapConfig = serde_json::from_value(Value::Object(umap))
        .map_err(|e| ApiError::bad_request(format!("invalid umap settings: {e}")))?;
    let n = dataset.n_samples();
    cfg.validate(n)?;
    let bound = (n - 1).min(dataset.n_variables());
    let max_pcs = req.max_pcs.unwrap_or(DEFAULT_MAX_PCS.min(bound));
    if max_pcs == 0 || max_pcs > bound {
        return Err(xmap_core::Error::InvalidComponents { requested: max_pcs, max: bound }.into());
    }
    let id = session_id(&dataset, &cfg, max_pcs);
    st.start_fit(id.clone(), dataset, cfg, max_pcs)?;
    let state = st.slot(&id)?.read().map(|s| s.name().to_owned()).unwrap_or_else(|_| "failed".into());
    Ok((StatusCode::ACCEPTED, Json(SessionCreated { session_id: id, state })))
}

async fn import_session(State(st): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let session = AnalysisSession::load(&body)?;
    let id = st.insert_ready(session)?;
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id: id, state: "ready".into() })))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Status {
    pub state: String,
    pub epoch: usize,
    pub total_epochs: usize,
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

async fn status(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Status>> {
    let slot = st.slot(&id)?;
    let guard = slot.read().map_err(|_| ApiError::internal("session lock poisoned"))?;
    let status = match &*guard {
        SlotState::Fitting(p) => Status {
            state: "fitting".into(),
            epoch: p.epoch(),
            total_epochs: p.total_epochs(),
            loss: p.loss(),
            error: None,
        },
        SlotState::Ready(s) => {
            let n = s.umap().config.n_epochs;
            Status { state: "ready".into(), epoch: n, total_epochs: n, loss: s.umap().trace.last(), error: None }
        }
        SlotState::Failed(e) => Status {
            state: "failed".into(),
            epoch: 0,
            total_epochs: 0,
            loss: None,
            error: Some(ApiError::from(e.clone()).body),
        },
    };
    Ok(Json(status))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub dataset: DatasetSummary,
    pub umap: UmapConfig,
    pub max_pcs: usize,
    pub selected_components: usize,
    /// Selection name to size.
    pub selections: BTreeMap<String, usize>,
}

async fn session_summary(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    st.read(&id, |s| {
        Ok(Json(SessionSummary {
            session_id: s.id.clone(),
            dataset: s.dataset().summary(),
            umap: s.umap().config.clone(),
            max_pcs: s.pca().n_components(),
            selected_components: s.selected_components(),
            selections: s.selections().iter().map(|(k, v)| (k.clone(), v.len())).collect(),
        }))
    })
}

async fn session_file(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let bytes = st.read(&id, |s| Ok(s.save()?))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes))
}

async fn pca(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PcaReport>> {
    st.read(&id, |s| Ok(Json(s.pca_report())))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComponentCount {
    pub count: usize,
}

async fn set_components(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<DiagnosticsSummary>> {
    let req: ComponentCount = parse_json(&body)?;
    st.write(&id, |s| {
        s.set_components(req.count)?;
        Ok(Json(s.diagnostics_summary()))
    })
}

async fn diagnostics(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DiagnosticsSummary>> {
    st.read(&id, |s| Ok(Json(s.diagnostics_summary())))
}

async fn voronoi(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<VoronoiDiagram>> {
    st.read(&id, |s| Ok(Json(s.voronoi().clone())))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ColorValues {
    #[serde(flatten)]
    pub mode: ColorMode,
    pub values: Vec<f64>,
}

/// Resolves a variable given by index or by name.
fn variable_index(s: &AnalysisSession, key: &str) -> ApiResult<usize> {
    if let Ok(j) = key.trim().parse::<usize>() {
        return Ok(j);
    }
    s.dataset()
        .variable_index(key)
        .ok_or_else(|| ApiError::bad_request(format!("unknown variable {key:?}")))
}

/// `GET color?mode=pc_score|q_residual|variable&index=k|total|name`
async fn color(
    State(st): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult<Json<ColorValues>> {
    let q = query(q)?;
    let mode_name = q.get("mode").ok_or_else(|| ApiError::bad_request("mode is required"))?;
    st.read(&id, |s| {
        let mode = match (mode_name.as_str(), q.get("index")) {
            ("variable", Some(key)) => ColorMode::Variable(variable_index(s, key)?),
            (m, index) => ColorMode::parse(m, index.map(String::as_str))?,
        };
        let values = s.color_by(mode)?.to_vec();
        Ok(Json(ColorValues { mode, values }))
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionRequest {
    pub name: String,
    #[serde(default)]
    pub indices: Option<Vec<usize>>,
    #[serde(default)]
    pub polygon: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionStored {
    pub name: String,
    pub size: usize,
}

async fn create_selection(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SelectionStored>)> {
    let req: SelectionRequest = parse_json(&body)?;
    if req.name.trim().is_empty() {
        return Err(ApiError::bad_request("selection name must not be empty"));
    }
    st.write(&id, |s| {
        let size = match (&req.indices, &req.polygon) {
            (Some(idx), None) => s.select_indices(&req.name, idx)?,
            (None, Some(poly)) => s.select_polygon(&req.name, poly)?,
            _ => return Err(ApiError::bad_request("give exactly one of indices or polygon")),
        };
        Ok((StatusCode::CREATED, Json(SelectionStored { name: req.name.clone(), size })))
    })
}

async fn list_selections(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<BTreeMap<String, Vec<usize>>>> {
    st.read(&id, |s| Ok(Json(s.selections().clone())))
}

async fn delete_selection(
    State(st): State<AppState>,
    Path((id, name)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    st.write(&id, |s| {
        s.remove_selection(&name)?;
        Ok(StatusCode::NO_CONTENT)
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareRequest {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareResponse {
    #[serde(flatten)]
    pub report: ContributionReport,
    /// Variable names, indexed like `values`.
    pub variables: Vec<String>,
}

async fn compare(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<CompareResponse>> {
    let req: CompareRequest = parse_json(&body)?;
    st.read(&id, |s| {
        let report = s.compare(&req.a, &req.b)?;
        Ok(Json(CompareResponse { report, variables: s.dataset().variables().to_vec() }))
    })
}

/// `GET histogram?var=name|index&selections=a,b&bins=20`
async fn histogram(
    State(st): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult<Json<Histogram>> {
    let q = query(q)?;
    let var = q.get("var").ok_or_else(|| ApiError::bad_request("var is required"))?;
    let names: Vec<String> = q
        .get("selections")
        .map(|s| s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect())
        .unwrap_or_default();
    let bins = match q.get("bins") {
        None => DEFAULT_BINS,
        Some(b) => b.parse().map_err(|_| ApiError::bad_request(format!("bins must be a count, got {b:?}")))?,
    };
    st.read(&id, |s| {
        let j = variable_index(s, var)?;
        Ok(Json(s.variable_histogram(j, &names, bins)?))
    })
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TransformRequest {
    Row(Vec<f64>),
    Wrapped { row: Vec<f64> },
}

/// Body is a JSON array of J values in original units, or `{"row": [...]}`;
/// the answer is the `[x, y]` position.
async fn transform(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<[f64; 2]>> {
    let row = match parse_json::<TransformRequest>(&body)? {
        TransformRequest::Row(r) | TransformRequest::Wrapped { row: r } => r,
    };
    st.read(&id, |s| Ok(Json(s.transform(ArrayView1::from(&row[..]))?)))
}

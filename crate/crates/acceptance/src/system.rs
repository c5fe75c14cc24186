use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;
use xmap_core::session::{DiagnosticsSummary, PcaReport};
use xmap_core::synthetic::{blobs, BlobSpec};
use xmap_core::{run_pipeline, AnalysisSession, Histogram, PreprocessMode, UmapConfig, VoronoiDiagram};
use xmap_server::{
    router, AppState, ColorValues, CompareResponse, DatasetCreated, ErrorBody, SelectionStored, ServerConfig,
    SessionCreated, Status, ERROR_CODES,
};

use crate::Criterion;

pub fn determinism() -> Criterion {
    let mut c = Criterion::new("Determinism");
    let data = blobs(&BlobSpec::default()).unwrap();
    let d = data.dataset.preprocess(PreprocessMode::Center).unwrap();
    let cfg = UmapConfig { seed: 9, ..Default::default() };
    let run = || run_pipeline(d.clone(), &cfg, 10).and_then(|s| s.save().map(|b| (s, b)));
    let ((mut s, first), (_, second)) = match (run(), run()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return c.error("fit", e).clone(),
    };
    c.check("two runs, same seed", first == second, format!("{} bytes, identical = {}", first.len(), first == second));

    s.select_indices("a", &data.members(0)).unwrap();
    s.set_components(2).unwrap();
    let bytes = s.save().unwrap();
    let exact = match AnalysisSession::load(&bytes) {
        Ok(t) => {
            t.save().ok().as_ref() == Some(&bytes)
                && t.umap().coords == s.umap().coords
                && t.pca().loadings() == s.pca().loadings()
                && t.diagnostics() == s.diagnostics()
                && t.voronoi() == s.voronoi()
                && t.selections() == s.selections()
                && t.selected_components() == 2
        }
        Err(_) => false,
    };
    c.check("save/load round trip", exact, "every artifact and the re-saved bytes are equal");
    c
}

struct Client {
    app: Router,
    schema_errors: Vec<String>,
}

impl Client {
    async fn raw(&self, method: Method, uri: &str, body: Body) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri).body(body).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    /// Sends a request and decodes the answer into its documented type,
    /// noting any payload that does not fit.
    async fn call<T: DeserializeOwned>(&mut self, method: Method, uri: &str, body: impl Into<Body>) -> Option<T> {
        let (status, bytes) = self.raw(method, uri, body.into()).await;
        if !status.is_success() {
            let note = match serde_json::from_slice::<ErrorBody>(&bytes) {
                Ok(e) if ERROR_CODES.contains(&e.code.as_str()) => format!("{uri}: {status} {}", e.code),
                _ => format!("{uri}: {status} with malformed error body"),
            };
            self.schema_errors.push(note);
            return None;
        }
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(e) => {
                self.schema_errors.push(format!("{uri}: {e}"));
                None
            }
        }
    }
}

pub fn end_to_end_api() -> Criterion {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    rt.block_on(api_flow())
}

async fn api_flow() -> Criterion {
    let mut c = Criterion::new("End-to-end API");
    let data = blobs(&BlobSpec::default()).unwrap();
    let mut csv = Vec::new();
    data.dataset.write_csv(&mut csv).unwrap();
    let mut api = Client { app: router(AppState::new(ServerConfig::default())), schema_errors: Vec::new() };

    let Some(ds) = api.call::<DatasetCreated>(Method::POST, "/datasets?id_column=id&preprocessing=center", csv).await
    else {
        return c.check("upload", false, api.schema_errors.join("; ")).clone();
    };
    let body = json!({ "dataset_id": ds.dataset_id }).to_string();
    let Some(created) = api.call::<SessionCreated>(Method::POST, "/sessions", body).await else {
        return c.check("fit request", false, api.schema_errors.join("; ")).clone();
    };
    let id = created.session_id;
    let mut ready = false;
    for _ in 0..6000 {
        match api.call::<Status>(Method::GET, &format!("/sessions/{id}/status"), Body::empty()).await {
            Some(s) if s.state == "ready" => {
                ready = true;
                break;
            }
            Some(s) if s.state == "fitting" => tokio::time::sleep(Duration::from_millis(10)).await,
            _ => break,
        }
    }
    c.check("fit reaches ready", ready, format!("session {id}"));
    if !ready {
        return c;
    }

    let u = |p: &str| format!("/sessions/{id}/{p}");
    let pca: Option<PcaReport> = api.call(Method::GET, &u("pca"), Body::empty()).await;
    let diag: Option<DiagnosticsSummary> = api.call(Method::GET, &u("diagnostics"), Body::empty()).await;
    let vor: Option<VoronoiDiagram> = api.call(Method::GET, &u("voronoi"), Body::empty()).await;
    let color: Option<ColorValues> = api.call(Method::GET, &u("color?mode=q_residual&index=total"), Body::empty()).await;
    let select = |name: &str, label: usize| {
        let body = json!({ "name": name, "indices": data.members(label) }).to_string();
        (u("selections"), body)
    };
    let (uri, body) = select("blob0", 0);
    let sa: Option<SelectionStored> = api.call(Method::POST, &uri, body).await;
    let (uri, body) = select("blob1", 1);
    let sb: Option<SelectionStored> = api.call(Method::POST, &uri, body).await;
    let cmp: Option<CompareResponse> =
        api.call(Method::POST, &u("compare"), json!({ "a": "blob0", "b": "blob1" }).to_string()).await;
    let hist: Option<Histogram> = api.call(Method::GET, &u("histogram?var=Y8&selections=blob0,blob1"), Body::empty()).await;
    let row = data.dataset.raw().row(0).to_vec();
    let xy: Option<[f64; 2]> = api.call(Method::POST, &u("transform"), Value::from(row).to_string()).await;

    let shapes = pca.as_ref().is_some_and(|p| p.variables.len() == 10)
        && diag.is_some()
        && vor.as_ref().is_some_and(|v| v.cells.len() == 300)
        && color.as_ref().is_some_and(|c| c.values.len() == 300 && c.values.iter().all(|v| (0.0..=1.0).contains(v)))
        && sa.as_ref().is_some_and(|s| s.size == 100)
        && sb.as_ref().is_some_and(|s| s.size == 100)
        && hist.as_ref().is_some_and(|h| h.selections.len() == 2)
        && xy.is_some_and(|p| p.iter().all(|v| v.is_finite()));
    let detail = if api.schema_errors.is_empty() {
        "every payload decodes into its documented type with consistent sizes".to_owned()
    } else {
        api.schema_errors.join("; ")
    };
    c.check("payloads schema-valid", shapes && api.schema_errors.is_empty(), detail);

    match cmp {
        Some(r) => {
            let top = r.report.ranking[0];
            let name = &r.variables[top];
            c.check("planted variable at rank 1", name == "Y8", format!("rank 1 is {name}"));

            // numbers crossing JSON must match the session file bit for bit
            let (_, file) = api.raw(Method::GET, &u("file"), Body::empty()).await;
            let same = AnalysisSession::load(&file)
                .and_then(|s| s.compare("blob0", "blob1"))
                .is_ok_and(|local| local.values == r.report.values);
            c.check("JSON numbers round-trip exactly", same, "compare values equal the saved session's");
        }
        None => {
            c.check("planted variable at rank 1", false, "compare failed");
        }
    }
    c
}

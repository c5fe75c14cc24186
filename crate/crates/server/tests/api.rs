use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use xmap_core::synthetic::{blobs, BlobSpec, Labeled};
use xmap_server::{router, AppState, ServerConfig, ERROR_CODES};

fn data() -> Labeled {
    blobs(&BlobSpec { n_per_blob: 30, ..Default::default() }).unwrap()
}

fn csv(d: &Labeled) -> Vec<u8> {
    let mut out = Vec::new();
    d.dataset.write_csv(&mut out).unwrap();
    out
}

fn app(dir: Option<&std::path::Path>) -> Router {
    router(AppState::new(ServerConfig { data_dir: dir.map(Into::into), ..Default::default() }))
}

async fn call(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Value, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    if !status.is_success() {
        let code = value["code"].as_str().unwrap_or_else(|| panic!("{uri}: error without code: {value}"));
        assert!(ERROR_CODES.contains(&code), "undocumented code {code}");
        assert!(value["message"].is_string());
    }
    (status, value, bytes)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, v, _) = call(app, Method::GET, uri, Body::empty()).await;
    (s, v)
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let (s, v, _) = call(app, Method::POST, uri, body.to_string()).await;
    (s, v)
}

async fn upload(app: &Router, d: &Labeled) -> String {
    let (s, v, _) = call(app, Method::POST, "/datasets?id_column=id", csv(d)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["summary"]["n_samples"], 90);
    assert_eq!(v["summary"]["preprocessing"], "centered");
    v["dataset_id"].as_str().unwrap().to_owned()
}

async fn wait_ready(app: &Router, id: &str) -> Value {
    for _ in 0..2000 {
        let (s, v) = get(app, &format!("/sessions/{id}/status")).await;
        assert_eq!(s, StatusCode::OK);
        match v["state"].as_str().unwrap() {
            "ready" => return v,
            "failed" => panic!("fit failed: {v}"),
            _ => tokio::time::sleep(Duration::from_millis(10)).await,
        }
    }
    panic!("fit did not finish");
}

async fn fitted(app: &Router, d: &Labeled, umap: Value) -> String {
    let ds = upload(app, d).await;
    let (s, v) = post(app, "/sessions", json!({ "dataset_id": ds, "umap": umap, "max_pcs": 5 })).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let id = v["session_id"].as_str().unwrap().to_owned();
    wait_ready(app, &id).await;
    id
}

fn quick() -> Value {
    json!({ "n_neighbors": 10, "n_epochs": 80 })
}

#[tokio::test(flavor = "multi_thread")]
async fn full_workflow() {
    let d = data();
    let app = app(None);
    let id = fitted(&app, &d, quick()).await;

    let (s, summary) = get(&app, &format!("/sessions/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(summary["session_id"], id.as_str());
    assert_eq!(summary["max_pcs"], 5);
    assert_eq!(summary["umap"]["seed"], 42);

    let (_, pca) = get(&app, &format!("/sessions/{id}/pca")).await;
    assert_eq!(pca["variables"].as_array().unwrap().len(), 10);

    let (s, diag, _) =
        call(&app, Method::PUT, &format!("/sessions/{id}/components"), json!({ "count": 2 }).to_string()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(diag["selected_components"], 2);
    let (_, diag) = get(&app, &format!("/sessions/{id}/diagnostics")).await;
    assert_eq!(diag["selected_components"], 2);

    let (_, vor) = get(&app, &format!("/sessions/{id}/voronoi")).await;
    assert_eq!(vor["cells"].as_array().unwrap().len(), 90);

    for (mode, index) in [("q_residual", "total"), ("q_residual", "1"), ("pc_score", "0"), ("variable", "Y8")] {
        let (s, c) = get(&app, &format!("/sessions/{id}/color?mode={mode}&index={index}")).await;
        assert_eq!(s, StatusCode::OK, "{mode} {index}: {c}");
        assert_eq!(c["mode"], mode);
        let values: Vec<f64> = serde_json::from_value(c["values"].clone()).unwrap();
        assert_eq!(values.len(), 90);
        if mode == "q_residual" {
            assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        if mode == "variable" {
            assert_eq!(c["index"], 7);
            assert_eq!(values[3], d.dataset.raw()[[3, 7]]);
        }
    }

    let sel = |name: &str, label: usize| json!({ "name": name, "indices": d.members(label) });
    assert_eq!(post(&app, &format!("/sessions/{id}/selections"), sel("a", 0)).await.1["size"], 30);
    assert_eq!(post(&app, &format!("/sessions/{id}/selections"), sel("b", 1)).await.1["size"], 30);
    let (_, list) = get(&app, &format!("/sessions/{id}/selections")).await;
    assert_eq!(list["a"].as_array().unwrap().len(), 30);

    let (s, cmp) = post(&app, &format!("/sessions/{id}/compare"), json!({ "a": "a", "b": "b" })).await;
    assert_eq!(s, StatusCode::OK);
    let top = cmp["ranking"][0].as_u64().unwrap() as usize;
    assert_eq!(cmp["variables"][top], "Y8");

    let (_, same) = post(&app, &format!("/sessions/{id}/compare"), json!({ "a": "a", "b": "a" })).await;
    assert!(same["values"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));

    let (s, h) = get(&app, &format!("/sessions/{id}/histogram?var=Y8&selections=a,b&bins=12")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["edges"].as_array().unwrap().len(), 13);
    let counts: Vec<usize> = serde_json::from_value(h["selections"][0]["counts"].clone()).unwrap();
    assert_eq!(counts.iter().sum::<usize>(), 30);

    let row: Vec<f64> = d.dataset.raw().row(0).to_vec();
    let (s, xy) = post(&app, &format!("/sessions/{id}/transform"), json!(row)).await;
    assert_eq!(s, StatusCode::OK);
    let (_, xy2) = post(&app, &format!("/sessions/{id}/transform"), json!({ "row": row })).await;
    assert_eq!(xy, xy2);
    assert_eq!(xy.as_array().unwrap().len(), 2);

    let (s, _, _) = call(&app, Method::DELETE, &format!("/sessions/{id}/selections/b"), Body::empty()).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, e) = post(&app, &format!("/sessions/{id}/compare"), json!({ "a": "a", "b": "b" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "unknown_selection");
}

#[tokio::test(flavor = "multi_thread")]
async fn queries_conflict_while_fitting() {
    let d = data();
    let app = app(None);
    let ds = upload(&app, &d).await;
    let body = json!({ "dataset_id": ds, "umap": { "n_neighbors": 10, "n_epochs": 4000 }, "max_pcs": 3 });
    let (_, v) = post(&app, "/sessions", body.clone()).await;
    let id = v["session_id"].as_str().unwrap().to_owned();
    let (s, e) = get(&app, &format!("/sessions/{id}/pca")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["code"], "not_ready");
    assert_eq!(e["detail"]["state"], "fitting");

    // resubmitting the same request joins the running fit
    let (s, again) = post(&app, "/sessions", body).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(again["session_id"], id.as_str());

    let status = wait_ready(&app, &id).await;
    assert_eq!(status["epoch"], 4000);
    assert!(status["loss"].as_f64().unwrap().is_finite());
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_persist_and_restore() {
    let dir = tempfile::tempdir().unwrap();
    let d = data();
    let first = app(Some(dir.path()));
    let id = fitted(&first, &d, quick()).await;
    post(&first, &format!("/sessions/{id}/selections"), json!({ "name": "a", "indices": [0, 1, 2] })).await;
    let (_, _, file) = call(&first, Method::GET, &format!("/sessions/{id}/file"), Body::empty()).await;
    let on_disk = std::fs::read(dir.path().join(format!("{id}.xmap"))).unwrap();
    assert_eq!(file, on_disk);

    // a fresh server restores lazily from the same directory
    let second = app(Some(dir.path()));
    let (s, sels) = get(&second, &format!("/sessions/{id}/selections")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(sels["a"], json!([0, 1, 2]));

    // import into a memory-only server gives the same id and file
    let third = app(None);
    let (s, v, _) = call(&third, Method::POST, "/sessions/import", file.clone()).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["session_id"], id.as_str());
    let (_, _, again) = call(&third, Method::GET, &format!("/sessions/{id}/file"), Body::empty()).await;
    assert_eq!(again, file);

    let mut bad = file;
    bad.truncate(bad.len() / 2);
    let (s, e, _) = call(&third, Method::POST, "/sessions/import", bad).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "corrupt_session");
}

#[tokio::test(flavor = "multi_thread")]
async fn identical_requests_give_identical_sessions() {
    let d = data();
    let a = app(None);
    let b = app(None);
    let ia = fitted(&a, &d, quick()).await;
    let ib = fitted(&b, &d, quick()).await;
    assert_eq!(ia, ib);
    let fa = call(&a, Method::GET, &format!("/sessions/{ia}/file"), Body::empty()).await.2;
    let fb = call(&b, Method::GET, &format!("/sessions/{ib}/file"), Body::empty()).await.2;
    assert_eq!(fa, fb);
}

#[tokio::test(flavor = "multi_thread")]
async fn client_errors() {
    let d = data();
    let app = app(None);

    let (s, e) = get(&app, "/sessions/abc123/status").await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));
    let (s, e) = post(&app, "/sessions", json!({ "dataset_id": "nope" })).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_dataset")));
    let (s, e) = get(&app, "/no/such/path").await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (s, e, _) = call(&app, Method::POST, "/sessions", "{not json").await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));

    let (s, e, _) = call(&app, Method::POST, "/datasets", "a,b\n1,2\n3,x\n4,5\n").await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("non_numeric_cell")));
    assert_eq!(e["detail"]["value"], "x");
    let (s, e, _) = call(&app, Method::POST, "/datasets?preprocessing=whiten", csv(&d)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{e}");

    let ds = upload(&app, &d).await;
    let (s, e) = post(&app, "/sessions", json!({ "dataset_id": ds, "umap": { "n_neighbors": 1 } })).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_config")));
    let (s, e) = post(&app, "/sessions", json!({ "dataset_id": ds, "max_pcs": 11 })).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_components")));

    let id = fitted(&app, &d, quick()).await;
    let u = |p: &str| format!("/sessions/{id}/{p}");
    let (s, e) = get(&app, &u("color?mode=pc_score&index=9")).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("index_out_of_range")));
    let (s, e) = get(&app, &u("color?mode=rainbow")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{e}");
    let (s, v) = post(&app, &u("selections"), json!({ "name": "e", "indices": [] })).await;
    assert_eq!((s, v["size"].as_u64()), (StatusCode::CREATED, Some(0)));
    post(&app, &u("selections"), json!({ "name": "f", "indices": [1] })).await;
    let (s, e) = post(&app, &u("compare"), json!({ "a": "e", "b": "f" })).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("empty_selection")));
    let (s, e) = post(&app, &u("selections"), json!({ "name": "o", "indices": [90] })).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("index_out_of_range")));
    let (s, e) = post(&app, &u("selections"), json!({ "name": "x" })).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    let (s, e) = post(&app, &u("transform"), json!([1.0, 2.0])).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("dimension_mismatch")));
    let (s, e) = get(&app, &u("histogram?var=nope")).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    let (s, e, _) = call(&app, Method::PUT, &u("components"), json!({ "count": 0 }).to_string()).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_components")));
    let (s, e, _) = call(&app, Method::DELETE, &u("selections/ghost"), Body::empty()).await;
    assert_eq!((s, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("unknown_selection")));
}

mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use phenomap::artifact::PipelineArtifact;
use phenomap::io::format_cell;
use phenomap::pipeline::run_pipeline;
use phenomap::service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(a: Option<Arc<PipelineArtifact>>) -> axum::Router {
    router(AppState { artifact: a }, None)
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Value) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &axum::Router, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::post("/api/embed")
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    call(app, req).await
}

fn umap_artifact() -> Arc<PipelineArtifact> {
    Arc::new(common::fitted_artifact(300, 12))
}

/// The `i`-th stored test row as a JSON record.
fn record(a: &PipelineArtifact, i: usize) -> Value {
    let mut m = serde_json::Map::new();
    for (c, cell) in a.test_table.columns().iter().zip(a.test_table.row(i)) {
        if !a.test_table.is_excluded(&c.name) {
            m.insert(c.name.clone(), Value::String(format_cell(cell)));
        }
    }
    Value::Object(m)
}

#[tokio::test]
async fn without_artifact_data_endpoints_are_unavailable() {
    let app = app(None);
    let (s, body) = get(&app, "/api/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["artifact_loaded"], false);
    for uri in ["/api/points", "/api/clusters", "/api/schema"] {
        let (s, body) = get(&app, uri).await;
        assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(body["error"]["code"], "no_artifact");
    }
    assert_eq!(post(&app, "{}").await.0, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn points_paginate_over_the_test_set() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = common::write_fixture(dir.path(), 5000, 1);
    let schema = common::schema();
    let table = phenomap::io::load_csv(&data, &schema).unwrap();
    let mut opts = common::small_options(1);
    opts.neighbors.clear();
    let a = Arc::new(run_pipeline(&table, &schema, &opts).unwrap().artifact);
    assert_eq!(a.test_rows.len(), 1000);
    let app = app(Some(a.clone()));
    let (s, p0) = get(&app, "/api/points?page_size=500").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(p0["total"], 1000);
    assert_eq!(p0["pages"], 2);
    let (_, p1) = get(&app, "/api/points?page=1&page_size=500").await;
    let (_, p2) = get(&app, "/api/points?page=2&page_size=500").await;
    assert_eq!(p2["points"].as_array().unwrap().len(), 0);
    let labels: Vec<u32> = [&p0, &p1]
        .iter()
        .flat_map(|p| p["points"].as_array().unwrap().iter().map(|q| q["label"].as_u64().unwrap() as u32))
        .collect();
    let m = a.model.as_ref().unwrap();
    assert_eq!(labels, m.primary().test_partition.labels);
    assert_eq!(p1["points"][0]["index"], 500);
    assert_eq!(get(&app, "/api/points").await.1["page_size"], 500);
    assert_eq!(get(&app, "/api/points?page_size=0").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/points?page_size=5001").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/points?page=x").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn clusters_pass_profiles_through() {
    let a = umap_artifact();
    let app = app(Some(a.clone()));
    let (s, body) = get(&app, "/api/clusters?top_k=2").await;
    assert_eq!(s, StatusCode::OK);
    let clusters = body["clusters"].as_array().unwrap();
    let total: f64 = clusters.iter().map(|c| c["share"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(clusters.iter().all(|c| c["top_features"].as_array().unwrap().len() <= 2));
    let m = a.model.as_ref().unwrap();
    for (c, s) in clusters.iter().zip(&m.summary.clusters) {
        let expected = serde_json::to_value(&s.profile).unwrap();
        assert_eq!(c["summary"]["profile"], expected);
    }
    assert_eq!(body["interval_basis"], m.summary.interval_basis);
}

#[tokio::test]
async fn schema_descriptor_mirrors_the_columns() {
    let a = umap_artifact();
    let (s, body) = get(&app(Some(a.clone())), "/api/schema").await;
    assert_eq!(s, StatusCode::OK);
    let fields = body["fields"].as_array().unwrap();
    assert_eq!(fields.len(), a.test_table.columns().len());
    let site = fields.iter().find(|f| f["name"] == "site").unwrap();
    assert_eq!(site["categories"], json!(["east", "north", "south"]));
    let dispo = fields.iter().find(|f| f["name"] == "dispo").unwrap();
    assert_eq!(dispo["feature"], false);
    assert_eq!(body["outcome"], "dispo");
}

#[tokio::test]
async fn embed_matches_stored_coordinates_and_is_idempotent() {
    let a = umap_artifact();
    let app = app(Some(a.clone()));
    let m = a.model.as_ref().unwrap();
    for i in [0, 7, 31] {
        let body = record(&a, i).to_string();
        let (s, r1) = post(&app, body.clone()).await;
        assert_eq!(s, StatusCode::OK, "{r1}");
        let (_, r2) = post(&app, body).await;
        assert_eq!(r1, r2);
        let stored = m.primary().test_coords[i];
        assert_eq!(r1["x"].as_f64().unwrap().to_bits(), stored[0].to_bits());
        assert_eq!(r1["y"].as_f64().unwrap().to_bits(), stored[1].to_bits());
        assert_eq!(r1["label"].as_u64().unwrap() as u32, m.primary().test_partition.labels[i]);
        let resp: f64 = r1["responsibilities"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((resp - 1.0).abs() <= 1e-9);
        assert!(r1["cluster"]["share_interval"]["mean"].is_number());
    }
}

#[tokio::test]
async fn embed_validation_errors() {
    let a = umap_artifact();
    let app = app(Some(a.clone()));
    let (s, _) = post(&app, "{not json").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, "[1, 2]").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, body) = post(&app, json!({"x0": 1.0, "shoe_size": 44}).to_string()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "unknown_field");
    assert_eq!(body["error"]["fields"], json!(["shoe_size"]));
    let (s, body) = post(&app, json!({"x0": "tall", "cc": 3}).to_string()).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "type_error");
    assert_eq!(body["error"]["fields"], json!(["x0", "cc"]));

    let (s, body) = post(&app, json!({"x0": 8.0, "x1": 0.0, "x2": 0.0, "site": "atlantis", "cc": true}).to_string()).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let warnings: Vec<&str> = body["warnings"].as_array().unwrap().iter().map(|w| w.as_str().unwrap()).collect();
    assert!(warnings.iter().any(|w| w.contains("atlantis")));
    assert!(warnings.iter().any(|w| w.contains("x3")));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_match_serial_answers() {
    let a = umap_artifact();
    let app = app(Some(a.clone()));
    let bodies: Vec<String> = (0..12).map(|i| record(&a, i % 6).to_string()).collect();
    let mut serial = Vec::new();
    for b in &bodies {
        serial.push(post(&app, b.clone()).await);
    }
    let handles: Vec<_> = bodies
        .iter()
        .map(|b| {
            let app = app.clone();
            let b = b.clone();
            tokio::spawn(async move { post(&app, b).await })
        })
        .collect();
    for (h, s) in handles.into_iter().zip(&serial) {
        assert_eq!(&h.await.unwrap(), s);
    }
    let (_, p) = get(&app, "/api/points?page_size=5000").await;
    assert_eq!(p["total"].as_u64().unwrap() as usize, a.test_rows.len());
}

//! Read-only JSON API over a loaded artifact.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use phenomap_core::dataset::{parse_cell, Cell, ColumnKind, FeatureEncoder, Table};
use phenomap_core::phenotype::{ClusterSummary, FeatureDifference, Interval, UnmatchedCluster};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::artifact::{PipelineArtifact, SelectedModel};
use crate::pipeline::{project, TOOL_VERSION};

pub const DEFAULT_PAGE_SIZE: usize = 500;
pub const MAX_PAGE_SIZE: usize = 5000;
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Clone, Default)]
pub struct AppState {
    pub artifact: Option<Arc<PipelineArtifact>>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub fields: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    fn with_fields(mut self, fields: Vec<String>) -> Self {
        self.fields = fields;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": {"code": self.code, "message": self.message, "fields": self.fields}
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn loaded(state: &AppState) -> std::result::Result<&Arc<PipelineArtifact>, ApiError> {
    state
        .artifact
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_artifact", "no artifact is loaded"))
}

fn selected(state: &AppState) -> std::result::Result<(&Arc<PipelineArtifact>, &SelectedModel), ApiError> {
    let a = loaded(state)?;
    let m = a.model.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            "no_stable_clustering",
            "the loaded artifact holds no selected clustering",
        )
    })?;
    Ok((a, m))
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/schema", get(schema))
        .route("/api/points", get(points))
        .route("/api/clusters", get(clusters))
        .route("/api/embed", post(embed))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(CorsLayer::permissive())
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": TOOL_VERSION,
        "artifact_loaded": state.artifact.is_some(),
        "stable_clustering": state.artifact.as_ref().map(|a| a.model.is_some()),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    pub kind: String,
    pub feature: bool,
    /// Training vocabulary of the primary fold-model for categorical fields.
    pub categories: Option<Vec<String>>,
    /// Observed training range of the primary fold-model for numeric fields.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SchemaResponse {
    pub fields: Vec<FieldDescriptor>,
    pub outcome: Option<String>,
    pub complaint: Option<String>,
}

async fn schema(State(state): State<AppState>) -> ApiResult<SchemaResponse> {
    let a = loaded(&state)?;
    let encoders = a.model.as_ref().map(|m| m.primary().preprocessor.encoders());
    let fields = a
        .test_table
        .columns()
        .iter()
        .map(|c| {
            let enc = encoders.and_then(|e| e.iter().find(|e| e.column() == c.name));
            let (categories, min, max) = match enc {
                Some(FeatureEncoder::Categorical { categories, .. }) => {
                    (Some(categories.iter().flatten().cloned().collect()), None, None)
                }
                Some(FeatureEncoder::Numeric { min, max, .. }) => (None, Some(*min), Some(*max)),
                None => (None, None, None),
            };
            FieldDescriptor {
                name: c.name.clone(),
                kind: c.kind.as_str().to_owned(),
                feature: !a.test_table.is_excluded(&c.name),
                categories,
                min,
                max,
            }
        })
        .collect();
    Ok(Json(SchemaResponse {
        fields,
        outcome: a.schema.outcome.as_ref().map(|o| o.column.clone()),
        complaint: a.schema.complaint.clone(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct PageQuery {
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Point {
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub label: u32,
    pub truth: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PointsResponse {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub pages: usize,
    pub fold: usize,
    pub points: Vec<Point>,
}

async fn points(State(state): State<AppState>, Query(q): Query<PageQuery>) -> ApiResult<PointsResponse> {
    let (a, m) = selected(&state)?;
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_page_size",
            format!("page_size must lie in 1..={MAX_PAGE_SIZE}"),
        ));
    }
    let page = q.page.unwrap_or(0);
    let fm = m.primary();
    let total = fm.test_coords.len();
    let start = page.saturating_mul(page_size).min(total);
    let end = (start + page_size).min(total);
    let points = (start..end)
        .map(|i| Point {
            index: i,
            x: fm.test_coords[i][0],
            y: fm.test_coords[i][1],
            label: fm.test_partition.labels[i],
            truth: a.test_truth.as_ref().map(|t| t[i]),
        })
        .collect();
    Ok(Json(PointsResponse {
        total,
        page,
        page_size,
        pages: total.div_ceil(page_size),
        fold: fm.fold,
        points,
    }))
}

#[derive(Debug, Deserialize)]
pub struct TopKQuery {
    pub top_k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterView {
    pub cluster: u32,
    pub count: usize,
    pub share: f64,
    pub share_interval: Interval,
    pub admit_rate: Option<Interval>,
    pub top_features: Vec<FeatureDifference>,
    pub summary: ClusterSummary,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClustersResponse {
    pub primary_fold: usize,
    pub interval_basis: String,
    pub top_k: usize,
    pub clusters: Vec<ClusterView>,
    pub unmatched: Vec<UnmatchedCluster>,
}

fn cluster_view(c: &ClusterSummary, top_k: usize) -> ClusterView {
    ClusterView {
        cluster: c.cluster,
        count: c.profile.count,
        share: c.profile.share,
        share_interval: c.share,
        admit_rate: c.admit_rate,
        top_features: c.profile.top(top_k).to_vec(),
        summary: c.clone(),
    }
}

async fn clusters(State(state): State<AppState>, Query(q): Query<TopKQuery>) -> ApiResult<ClustersResponse> {
    let (_, m) = selected(&state)?;
    let top_k = q.top_k.unwrap_or(DEFAULT_TOP_K);
    Ok(Json(ClustersResponse {
        primary_fold: m.summary.primary_fold,
        interval_basis: m.summary.interval_basis.clone(),
        top_k,
        clusters: m.summary.clusters.iter().map(|c| cluster_view(c, top_k)).collect(),
        unmatched: m.summary.unmatched.clone(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub x: f64,
    pub y: f64,
    pub label: u32,
    pub responsibilities: Vec<f64>,
    pub fold_coordinates: Vec<[f64; 2]>,
    pub fold_labels: Vec<u32>,
    pub cluster: Option<ClusterView>,
    pub warnings: Vec<String>,
}

/// Builds a one-row table in the artifact's column layout from a JSON
/// record. Absent fields are missing.
pub fn record_table(template: &Table, record: &Map<String, Value>, missing: &[String]) -> std::result::Result<Table, ApiError> {
    let unknown: Vec<String> = record.keys().filter(|k| template.column_index(k).is_none()).cloned().collect();
    if !unknown.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "unknown_field",
            format!("unknown field(s): {}", unknown.join(", ")),
        )
        .with_fields(unknown));
    }
    let mut bad = Vec::new();
    let row: Vec<Cell> = template
        .columns()
        .iter()
        .map(|c| {
            let cell = match record.get(&c.name) {
                None | Some(Value::Null) => Some(Cell::Missing),
                Some(Value::Number(n)) => match (c.kind, n.as_f64()) {
                    (ColumnKind::Categorical, Some(v)) => Some(Cell::Category(format!("{v}"))),
                    (ColumnKind::BinaryFlag, Some(v)) if v == 0.0 || v == 1.0 => Some(Cell::Number(v)),
                    (ColumnKind::Numeric, Some(v)) if v.is_finite() => Some(Cell::Number(v)),
                    _ => None,
                },
                Some(Value::Bool(b)) => match c.kind {
                    ColumnKind::BinaryFlag => Some(Cell::Number(if *b { 1.0 } else { 0.0 })),
                    _ => None,
                },
                Some(Value::String(s)) => parse_cell(s, c, 0, missing).ok(),
                Some(_) => None,
            };
            cell.unwrap_or_else(|| {
                bad.push(c.name.clone());
                Cell::Missing
            })
        })
        .collect();
    if !bad.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "type_error",
            format!("value of wrong type for field(s): {}", bad.join(", ")),
        )
        .with_fields(bad));
    }
    let mut t = template.empty_like();
    t.push_row(row)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "type_error", e.to_string()))?;
    Ok(t)
}

/// The embed path shared by the handler and tests.
pub fn embed_record(artifact: &PipelineArtifact, record: &Map<String, Value>) -> std::result::Result<EmbedResponse, ApiError> {
    let model = artifact.model.as_ref().ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, "no_stable_clustering", "the loaded artifact holds no selected clustering")
    })?;
    let table = record_table(&artifact.test_table, record, &artifact.schema.missing_tokens())?;
    let p = project(model, &table)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", e.to_string()))?
        .pop()
        .expect("one record");
    let cluster = model
        .summary
        .clusters
        .iter()
        .find(|c| c.cluster == p.label)
        .map(|c| cluster_view(c, DEFAULT_TOP_K));
    Ok(EmbedResponse {
        x: p.coordinates[0],
        y: p.coordinates[1],
        label: p.label,
        responsibilities: p.responsibilities,
        fold_coordinates: p.fold_coordinates,
        fold_labels: p.fold_labels,
        cluster,
        warnings: p.warnings,
    })
}

async fn embed(State(state): State<AppState>, body: Bytes) -> ApiResult<EmbedResponse> {
    let artifact = loaded(&state)?.clone();
    let value: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))?;
    let Value::Object(record) = value else {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed_body",
            "body must be a JSON object mapping field names to values",
        ));
    };
    tokio::task::spawn_blocking(move || embed_record(&artifact, &record))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map(Json)
}

pub async fn serve(addr: std::net::SocketAddr, state: AppState, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir)).await
}

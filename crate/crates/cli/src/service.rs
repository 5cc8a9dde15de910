//! Read-only HTTP API over one loaded map.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gkm_core::digest::sha256_hex;
use gkm_core::gkm::{KnowledgeMap, NeighborQuery, ViewProjection};
use gkm_core::mapfile::SCHEMA_VERSION;
use serde::{Deserialize, Serialize};

pub const API_VERSION: &str = "1";
pub const BIND_ENV: &str = "GKM_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
const DEFAULT_K: usize = 10;

pub struct ServiceState {
    pub map: KnowledgeMap,
    pub provenance_hash: String,
    views: [ViewProjection; 2],
}

impl ServiceState {
    pub fn new(map: KnowledgeMap) -> gkm_core::Result<Self> {
        let provenance_hash = sha256_hex(serde_json::to_string(map.provenance())?.as_bytes());
        let views = [map.project_to_view(2)?, map.project_to_view(3)?];
        Ok(ServiceState {
            map,
            provenance_hash,
            views,
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "malformed_request".into(),
            message: message.into(),
        }
    }
}

impl From<gkm_core::Error> for ApiError {
    fn from(e: gkm_core::Error) -> Self {
        use gkm_core::Error as E;
        let status = match e {
            E::UnknownId(_) => StatusCode::NOT_FOUND,
            E::Unmappable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::Json(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = State<Arc<ServiceState>>;

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/map/meta", get(meta))
        .route("/api/docs/:id", get(doc))
        .route("/api/neighbors", get(neighbors))
        .route("/api/relevance", get(relevance))
        .route("/api/locate", post(locate))
        .route("/api/view", get(view))
        .route("/api/stability", get(stability))
        .fallback(|| async { ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found".into(),
            message: "no such route".into(),
        } })
        .with_state(state)
}

async fn index() -> Html<&'static str> {
    Html(include_str!("index.html"))
}

#[derive(Serialize)]
struct Meta<'a> {
    version: &'static str,
    schema_version: u32,
    dim: usize,
    entry_count: usize,
    provenance_hash: &'a str,
    vocabulary_ref: &'a str,
    config_hash: &'a str,
}

async fn meta(State(s): Shared) -> Response {
    Json(Meta {
        version: API_VERSION,
        schema_version: SCHEMA_VERSION,
        dim: s.map.dim(),
        entry_count: s.map.len(),
        provenance_hash: &s.provenance_hash,
        vocabulary_ref: s.map.vocabulary_ref(),
        config_hash: &s.map.provenance().config_hash,
    })
    .into_response()
}

async fn doc(State(s): Shared, Path(id): Path<String>) -> ApiResult<gkm_core::gkm::MapEntry> {
    Ok(Json(s.map.entry(&id)?.clone()))
}

#[derive(Deserialize)]
struct NeighborParams {
    id: Option<String>,
    coords: Option<String>,
    k: Option<usize>,
}

pub fn parse_coords(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("invalid coordinate {t:?}"))
        })
        .collect()
}

async fn neighbors(
    State(s): Shared,
    q: Result<Query<NeighborParams>, QueryRejection>,
) -> ApiResult<Vec<gkm_core::gkm::NeighborResult>> {
    let Query(p) = q?;
    let k = p.k.unwrap_or(DEFAULT_K);
    let out = match (p.id, p.coords) {
        (Some(id), None) => s.map.neighbors(NeighborQuery::Id(&id), k)?,
        (None, Some(c)) => {
            let coords = parse_coords(&c).map_err(ApiError::bad_request)?;
            s.map.neighbors(NeighborQuery::Coords(&coords), k)?
        }
        _ => return Err(ApiError::bad_request("exactly one of id or coords is required")),
    };
    Ok(Json(out))
}

#[derive(Deserialize)]
struct RelevanceParams {
    a: String,
    b: String,
}

#[derive(Serialize)]
pub struct Relevance {
    pub a: String,
    pub b: String,
    pub distance: f64,
}

async fn relevance(State(s): Shared, q: Result<Query<RelevanceParams>, QueryRejection>) -> ApiResult<Relevance> {
    let Query(p) = q?;
    let distance = s.map.relevance(&p.a, &p.b)?;
    Ok(Json(Relevance {
        a: p.a,
        b: p.b,
        distance,
    }))
}

#[derive(Deserialize)]
struct LocateBody {
    text: String,
}

#[derive(Serialize)]
pub struct Located {
    pub coords: Vec<f64>,
}

async fn locate(State(s): Shared, body: Bytes) -> ApiResult<Located> {
    let b: LocateBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("expected {{\"text\": string}}: {e}")))?;
    Ok(Json(Located {
        coords: s.map.locate(&b.text)?,
    }))
}

#[derive(Deserialize)]
struct ViewParams {
    dim: Option<usize>,
}

async fn view(State(s): Shared, q: Result<Query<ViewParams>, QueryRejection>) -> Result<Response, ApiError> {
    let Query(p) = q?;
    match p.dim.unwrap_or(2) {
        2 => Ok(Json(&s.views[0]).into_response()),
        3 => Ok(Json(&s.views[1]).into_response()),
        d => Err(ApiError::bad_request(format!("dim must be 2 or 3, got {d}"))),
    }
}

async fn stability(State(s): Shared) -> Response {
    Json(&s.map.provenance().stability_reports).into_response()
}

pub fn bind_address(flag: Option<&str>) -> String {
    flag.map(str::to_owned)
        .or_else(|| std::env::var(BIND_ENV).ok())
        .unwrap_or_else(|| DEFAULT_BIND.to_owned())
}

pub async fn serve(state: ServiceState, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("binding {addr}: {e}"))?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}

//! HTTP routes, all under `/v1`. Binary payloads travel as base64 strings.

use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use scefis_core::fuzzy::FusedOutput;
use scefis_core::pipeline::ProjectConfig;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Result, ServiceError};
use crate::store::{ImageUpload, ProjectStore, ReviewNext, SplitRequest};

const BODY_LIMIT: usize = 256 * 1024 * 1024;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<ProjectStore>;
type ApiResult = std::result::Result<Json<Value>, ServiceError>;

/// Runs a store call on the blocking pool and serializes its result.
async fn blocking<T, F>(store: Shared, f: F) -> ApiResult
where
    T: Serialize + Send + 'static,
    F: FnOnce(&ProjectStore) -> Result<T> + Send + 'static,
{
    let out = tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e)))??;
    Ok(Json(serde_json::to_value(out)?))
}

fn decode(field: &str, s: &str) -> Result<Vec<u8>> {
    B64.decode(s)
        .map_err(|e| ServiceError::BadRequest(format!("{field} is not valid base64: {e}")))
}

#[derive(Debug, Deserialize)]
pub struct CreateProject {
    pub id: String,
    #[serde(default)]
    pub config: Option<ProjectConfig>,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct UploadedImage {
    pub id: String,
    /// Base64 image file (PNG or PNM).
    pub data: String,
    /// Base64 gold mask, optional.
    #[serde(default)]
    pub gold: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct IngestRequest {
    pub images: Vec<UploadedImage>,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct FeedbackRequest {
    /// Base64 PNG of the corrected mask; nonzero pixels are object.
    pub mask_png: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReviewResponse {
    Item {
        image_id: String,
        position: usize,
        remaining: usize,
        threshold: u8,
        fused: FusedOutput,
        outputs: Vec<f64>,
        image_png: String,
        mask_png: String,
    },
    Empty {
        reviewed: usize,
    },
}

impl From<ReviewNext> for ReviewResponse {
    fn from(r: ReviewNext) -> Self {
        match r {
            ReviewNext::Item(i) => ReviewResponse::Item {
                image_id: i.image_id,
                position: i.position,
                remaining: i.remaining,
                threshold: i.threshold,
                fused: i.fused,
                outputs: i.outputs,
                image_png: B64.encode(i.image_png),
                mask_png: B64.encode(i.mask_png),
            },
            ReviewNext::Empty { reviewed } => ReviewResponse::Empty { reviewed },
        }
    }
}

async fn list_projects(State(s): State<Shared>) -> ApiResult {
    blocking(s, |s| s.list_projects()).await
}

async fn create_project(State(s): State<Shared>, Json(req): Json<CreateProject>) -> Response {
    let res = blocking(s, move |s| s.create_project(&req.id, req.config.unwrap_or_default())).await;
    match res {
        Ok(body) => (StatusCode::CREATED, body).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_project(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    blocking(s, move |s| s.project(&id)).await
}

async fn ingest(State(s): State<Shared>, Path(id): Path<String>, Json(req): Json<IngestRequest>) -> ApiResult {
    let files = req
        .images
        .into_iter()
        .map(|f| {
            Ok(ImageUpload {
                data: decode("data", &f.data)?,
                gold: f.gold.as_deref().map(|g| decode("gold", g)).transpose()?,
                id: f.id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    blocking(s, move |s| s.ingest_images(&id, files)).await
}

async fn configure(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    blocking(s, move |s| s.configure(&id)).await
}

async fn offline(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    blocking(s, move |s| s.offline(&id)).await
}

async fn train(State(s): State<Shared>, Path(id): Path<String>, body: Option<Json<SplitRequest>>) -> ApiResult {
    blocking(s, move |s| s.train(&id, body.map(|b| b.0))).await
}

async fn online(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    blocking(s, move |s| s.start_online(&id)).await
}

async fn review_next(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    blocking(s, move |s| s.next_review(&id).map(ReviewResponse::from)).await
}

async fn submit_feedback(
    State(s): State<Shared>,
    Path((id, image)): Path<(String, String)>,
    Json(req): Json<FeedbackRequest>,
) -> ApiResult {
    let mask = decode("mask_png", &req.mask_png)?;
    blocking(s, move |s| s.submit_feedback(&id, &image, &mask)).await
}

async fn get_feedback(State(s): State<Shared>, Path((id, image)): Path<(String, String)>) -> ApiResult {
    blocking(s, move |s| {
        let (record, mask) = s.feedback(&id, &image)?;
        Ok(json!({ "record": record, "mask_png": B64.encode(mask) }))
    })
    .await
}

async fn rules(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    blocking(s, move |s| s.rules(&id)).await
}

async fn metrics(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    blocking(s, move |s| s.metrics(&id)).await
}

pub fn router(store: Arc<ProjectStore>) -> Router {
    let v1 = Router::new()
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/images", post(ingest))
        .route("/projects/{id}/configure", post(configure))
        .route("/projects/{id}/offline", post(offline))
        .route("/projects/{id}/train", post(train))
        .route("/projects/{id}/online", post(online))
        .route("/projects/{id}/review/next", get(review_next))
        .route("/projects/{id}/review/{image}/feedback", get(get_feedback).post(submit_feedback))
        .route("/projects/{id}/rules", get(rules))
        .route("/projects/{id}/metrics", get(metrics));
    Router::new()
        .nest("/v1", v1)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(store)
}

/// Serves the API until the process is stopped.
pub async fn serve(store: Arc<ProjectStore>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}/v1", listener.local_addr()?);
    axum::serve(listener, router(store)).await
}

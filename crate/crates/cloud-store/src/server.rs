use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use fogdrive_core::trace::{SessionManifest, SCHEMA_VERSION};
use fogdrive_core::Clock;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::auth::{Auth, ClientEntry, Scope, DEFAULT_TTL_S};
use crate::blob::{is_trace_ref, BlobStore};
use crate::error::ApiError;
use crate::meta::{ListFilter, MetaStore, TraceMetadata};

pub const MANIFEST_HEADER: &str = "x-trace-manifest";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudConfig {
    pub data_dir: PathBuf,
    pub clients: Vec<ClientEntry>,
    pub token_ttl_s: i64,
    pub quota_bytes: Option<u64>,
    pub max_upload_bytes: usize,
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("cloud-data"),
            clients: Vec::new(),
            token_ttl_s: DEFAULT_TTL_S,
            quota_bytes: None,
            max_upload_bytes: 512 * 1024 * 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenRequest {
    pub client_id: String,
    pub client_secret: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenResponse {
    pub access_token: String,
    pub token_type: String,
    pub expires_in: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadReceipt {
    pub trace_ref: String,
    pub size_bytes: u64,
    pub sha256: String,
}

/// Everything a request handler touches.
pub struct Repository {
    pub auth: Auth,
    pub blobs: BlobStore,
    pub meta: MetaStore,
}

impl Repository {
    pub fn open(cfg: &CloudConfig, clock: Arc<dyn Clock>) -> Result<Self, ApiError> {
        std::fs::create_dir_all(&cfg.data_dir)?;
        let repo = Self {
            auth: Auth::new(cfg.clients.clone(), cfg.token_ttl_s, clock),
            blobs: BlobStore::open(&cfg.data_dir, cfg.quota_bytes)?,
            meta: MetaStore::open(&cfg.data_dir.join("metadata.sqlite"))?,
        };
        repo.reconcile()?;
        Ok(repo)
    }

    /// Drops metadata rows without a blob and blobs without a row.
    pub fn reconcile(&self) -> Result<(usize, usize), ApiError> {
        let rows = self.meta.refs()?;
        let blobs = self.blobs.list_refs()?;
        let mut dropped_rows = 0;
        for r in &rows {
            if !self.blobs.contains(r) {
                self.meta.delete(r)?;
                dropped_rows += 1;
            }
        }
        let mut dropped_blobs = 0;
        for b in &blobs {
            if rows.binary_search(b).is_err() {
                self.blobs.remove(b)?;
                dropped_blobs += 1;
            }
        }
        if dropped_rows + dropped_blobs > 0 {
            tracing::warn!(dropped_rows, dropped_blobs, "repository reconciled");
        }
        Ok((dropped_rows, dropped_blobs))
    }

    pub fn store(&self, manifest: SessionManifest, blob: &[u8], uploader: &str) -> Result<TraceMetadata, ApiError> {
        let staged = self.blobs.stage(blob)?;
        let outcome = self.blobs.commit(staged)?;
        let meta = TraceMetadata {
            trace_ref: outcome.trace_ref.clone(),
            manifest,
            size_bytes: outcome.size,
            uploaded_at: self.auth.now_ms(),
            uploader: uploader.to_string(),
        };
        match self.meta.insert(&meta) {
            Ok(stored) => Ok(stored),
            Err(e) => {
                if outcome.created {
                    let _ = self.blobs.remove(&outcome.trace_ref);
                }
                Err(e.into())
            }
        }
    }

    pub fn fetch(&self, trace_ref: &str) -> Result<(Vec<u8>, TraceMetadata), ApiError> {
        let not_found = || ApiError::NotFound(trace_ref.to_string());
        if !is_trace_ref(trace_ref) {
            return Err(not_found());
        }
        let meta = self.meta.get(trace_ref)?.ok_or_else(not_found)?;
        let bytes = self.blobs.get(trace_ref)?.ok_or_else(not_found)?;
        Ok((bytes, meta))
    }
}

type AppState = Arc<Repository>;

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn issue_token(State(repo): State<AppState>, body: Bytes) -> Result<Json<TokenResponse>, ApiError> {
    let req: TokenRequest = serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let token = repo.auth.issue(&req.client_id, &req.client_secret)?;
    Ok(Json(TokenResponse {
        access_token: token.token,
        token_type: "Bearer".into(),
        expires_in: repo.auth.ttl_s(),
    }))
}

fn check_manifest(raw: &[u8]) -> Result<SessionManifest, ApiError> {
    let m: SessionManifest =
        serde_json::from_slice(raw).map_err(|e| ApiError::ManifestInvalid(e.to_string()))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(ApiError::ManifestInvalid(format!("schema version {:?}", m.schema_version)));
    }
    if !is_trace_ref(&m.csv_sha256) {
        return Err(ApiError::ManifestInvalid("csv_sha256 is not a hex sha256".into()));
    }
    if m.ended_at < m.started_at {
        return Err(ApiError::ManifestInvalid("ended_at before started_at".into()));
    }
    Ok(m)
}

async fn upload(State(repo): State<AppState>, headers: HeaderMap, mut multipart: Multipart) -> Result<Response, ApiError> {
    let uploader = repo.auth.authorize(bearer(&headers), Scope::Upload)?;
    let mut manifest = None;
    let mut trace = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::BadRequest(e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| ApiError::BadRequest(e.to_string()))?;
        match name.as_str() {
            "manifest" => manifest = Some(data),
            "trace" => trace = Some(data),
            _ => {}
        }
    }
    let manifest = check_manifest(&manifest.ok_or(ApiError::MissingPart("manifest"))?)?;
    let trace = trace.ok_or(ApiError::MissingPart("trace"))?;
    let meta = blocking(move || repo.store(manifest, &trace, &uploader)).await?;
    let receipt = UploadReceipt {
        sha256: meta.trace_ref.clone(),
        trace_ref: meta.trace_ref,
        size_bytes: meta.size_bytes,
    };
    Ok((StatusCode::CREATED, Json(receipt)).into_response())
}

async fn get_trace(State(repo): State<AppState>, headers: HeaderMap, Path(trace_ref): Path<String>) -> Result<Response, ApiError> {
    repo.auth.authorize(bearer(&headers), Scope::Read)?;
    let (bytes, meta) = blocking(move || repo.fetch(&trace_ref)).await?;
    let encoded = base64::engine::general_purpose::STANDARD.encode(serde_json::to_vec(&meta).expect("metadata serializes"));
    let mut resp = bytes.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"));
    h.insert(MANIFEST_HEADER, HeaderValue::from_str(&encoded).expect("base64 is a valid header"));
    Ok(resp)
}

async fn list_traces(
    State(repo): State<AppState>,
    headers: HeaderMap,
    filter: Result<Query<ListFilter>, QueryRejection>,
) -> Result<Json<Vec<TraceMetadata>>, ApiError> {
    repo.auth.authorize(bearer(&headers), Scope::Read)?;
    let Query(filter) = filter.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let rows = blocking(move || Ok(repo.meta.list(&filter)?)).await?;
    Ok(Json(rows))
}

pub fn router(repo: Arc<Repository>, max_upload_bytes: usize) -> Router {
    Router::new()
        .route("/api/v1/token", post(issue_token))
        .route("/api/v1/traces", post(upload).get(list_traces))
        .route("/api/v1/traces/{trace_ref}", get(get_trace))
        .layer(DefaultBodyLimit::max(max_upload_bytes))
        .with_state(repo)
}

pub struct RunningServer {
    pub addr: SocketAddr,
    pub repo: Arc<Repository>,
    pub handle: tokio::task::JoinHandle<()>,
}

impl RunningServer {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

pub async fn spawn(cfg: &CloudConfig, clock: Arc<dyn Clock>, addr: SocketAddr) -> Result<RunningServer, ApiError> {
    let repo = Arc::new(Repository::open(cfg, clock)?);
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let app = router(repo.clone(), cfg.max_upload_bytes);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("cloud store stopped: {e}");
        }
    });
    Ok(RunningServer { addr, repo, handle })
}

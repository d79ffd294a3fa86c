use std::time::Duration;

use base64::Engine;
use fogdrive_core::trace::SessionManifest;
use reqwest::multipart::{Form, Part};
use thiserror::Error;

use crate::error::ErrorBody;
use crate::meta::{ListFilter, TraceMetadata};
use crate::server::{TokenRequest, TokenResponse, UploadReceipt, MANIFEST_HEADER};

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("{status} {code}: {detail}")]
    Api { status: u16, code: String, detail: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

impl CloudError {
    pub fn code(&self) -> Option<&str> {
        match self {
            CloudError::Api { code, .. } => Some(code),
            _ => None,
        }
    }

    /// Worth retrying later without changing the request.
    pub fn is_transient(&self) -> bool {
        match self {
            CloudError::Transport(_) => true,
            CloudError::Api { status, code, .. } => *status >= 500 || code == "token-expired",
            CloudError::Protocol(_) => false,
        }
    }
}

impl From<reqwest::Error> for CloudError {
    fn from(e: reqwest::Error) -> Self {
        CloudError::Transport(e.to_string())
    }
}

#[derive(Clone)]
pub struct CloudClient {
    base_url: String,
    http: reqwest::Client,
}

async fn check(resp: reqwest::Response) -> Result<reqwest::Response, CloudError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().await.unwrap_or_default();
    let body: ErrorBody = serde_json::from_str(&text).unwrap_or(ErrorBody {
        error: "http".into(),
        detail: text,
    });
    Err(CloudError::Api {
        status: status.as_u16(),
        code: body.error,
        detail: body.detail,
    })
}

impl CloudClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let http = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .timeout(Duration::from_secs(120))
            .build()
            .expect("http client");
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            http,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api/v1/{path}", self.base_url)
    }

    pub async fn token(&self, client_id: &str, client_secret: &str) -> Result<TokenResponse, CloudError> {
        let resp = self
            .http
            .post(self.url("token"))
            .json(&TokenRequest {
                client_id: client_id.into(),
                client_secret: client_secret.into(),
            })
            .send()
            .await?;
        check(resp)
            .await?
            .json()
            .await
            .map_err(|e| CloudError::Protocol(e.to_string()))
    }

    pub async fn upload(&self, token: &str, manifest: &SessionManifest, blob: Vec<u8>) -> Result<UploadReceipt, CloudError> {
        self.upload_parts(token, Some(manifest.to_json()), Some(blob)).await
    }

    /// Raw multipart upload; either part may be omitted.
    pub async fn upload_parts(
        &self,
        token: &str,
        manifest: Option<Vec<u8>>,
        blob: Option<Vec<u8>>,
    ) -> Result<UploadReceipt, CloudError> {
        let mut form = Form::new();
        if let Some(m) = manifest {
            form = form.part(
                "manifest",
                Part::bytes(m).mime_str("application/json").expect("static mime"),
            );
        }
        if let Some(b) = blob {
            form = form.part(
                "trace",
                Part::bytes(b)
                    .file_name("trace.fdtl")
                    .mime_str("application/octet-stream")
                    .expect("static mime"),
            );
        }
        let resp = self
            .http
            .post(self.url("traces"))
            .bearer_auth(token)
            .multipart(form)
            .send()
            .await?;
        check(resp)
            .await?
            .json()
            .await
            .map_err(|e| CloudError::Protocol(e.to_string()))
    }

    pub async fn get(&self, token: &str, trace_ref: &str) -> Result<(Vec<u8>, TraceMetadata), CloudError> {
        let resp = self
            .http
            .get(self.url(&format!("traces/{trace_ref}")))
            .bearer_auth(token)
            .send()
            .await?;
        let resp = check(resp).await?;
        let header = resp
            .headers()
            .get(MANIFEST_HEADER)
            .ok_or_else(|| CloudError::Protocol("missing manifest header".into()))?
            .to_str()
            .map_err(|e| CloudError::Protocol(e.to_string()))?
            .to_string();
        let raw = base64::engine::general_purpose::STANDARD
            .decode(header)
            .map_err(|e| CloudError::Protocol(e.to_string()))?;
        let meta = serde_json::from_slice(&raw).map_err(|e| CloudError::Protocol(e.to_string()))?;
        let bytes = resp.bytes().await?.to_vec();
        Ok((bytes, meta))
    }

    pub async fn list(&self, token: &str, filter: &ListFilter) -> Result<Vec<TraceMetadata>, CloudError> {
        let resp = self
            .http
            .get(self.url("traces"))
            .bearer_auth(token)
            .query(filter)
            .send()
            .await?;
        check(resp)
            .await?
            .json()
            .await
            .map_err(|e| CloudError::Protocol(e.to_string()))
    }
}

//! Durable store-and-forward queue of sealed traces.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use fogdrive_cloud::{CloudClient, CloudError, UploadReceipt};
use fogdrive_core::trace::{sha256_hex, SessionManifest};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ENVELOPE_EXT: &str = "fdtl";
const MANIFEST_EXT: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutboxEntry {
    pub id: String,
    dir: PathBuf,
}

impl OutboxEntry {
    pub fn envelope_path(&self) -> PathBuf {
        self.dir.join(format!("{}.{ENVELOPE_EXT}", self.id))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(format!("{}.{MANIFEST_EXT}", self.id))
    }
}

pub struct Outbox {
    dir: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("part");
    fs::write(&tmp, bytes)?;
    fs::File::open(&tmp)?.sync_all()?;
    fs::rename(tmp, path)
}

impl Outbox {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// The manifest is written first; an entry exists once its envelope does.
    pub fn put(&self, manifest: &SessionManifest, envelope: &[u8]) -> io::Result<OutboxEntry> {
        let entry = OutboxEntry {
            id: manifest.session_id.to_string(),
            dir: self.dir.clone(),
        };
        write_atomic(&entry.manifest_path(), &manifest.to_json())?;
        write_atomic(&entry.envelope_path(), envelope)?;
        Ok(entry)
    }

    pub fn list(&self) -> io::Result<Vec<OutboxEntry>> {
        let mut out = Vec::new();
        for e in fs::read_dir(&self.dir)? {
            let name = e?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(&format!(".{ENVELOPE_EXT}")) {
                let entry = OutboxEntry {
                    id: id.to_string(),
                    dir: self.dir.clone(),
                };
                if entry.manifest_path().is_file() {
                    out.push(entry);
                }
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    pub fn load(&self, entry: &OutboxEntry) -> io::Result<(SessionManifest, Vec<u8>)> {
        let manifest = serde_json::from_slice(&fs::read(entry.manifest_path())?)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok((manifest, fs::read(entry.envelope_path())?))
    }

    pub fn remove(&self, entry: &OutboxEntry) -> io::Result<()> {
        fs::remove_file(entry.envelope_path())?;
        fs::remove_file(entry.manifest_path())
    }

    /// Parks an entry the server refused, so it is not retried forever.
    pub fn reject(&self, entry: &OutboxEntry) -> io::Result<()> {
        let parked = self.dir.join("rejected");
        fs::create_dir_all(&parked)?;
        for p in [entry.envelope_path(), entry.manifest_path()] {
            fs::rename(&p, parked.join(p.file_name().expect("entry file")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 4,
            initial_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

/// Where and as whom to upload.
#[derive(Clone)]
pub struct CloudTarget {
    pub client: CloudClient,
    pub client_id: String,
    pub client_secret: String,
}

#[derive(Debug, Error)]
pub enum UploadError {
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("upload rejected: {code}: {detail}")]
    Rejected { code: String, detail: String },
    #[error("cloud unreachable after retries: {0}")]
    Unreachable(String),
    #[error("receipt does not match the uploaded envelope: {0}")]
    ReceiptMismatch(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

fn classify(e: CloudError) -> Result<String, UploadError> {
    if e.is_transient() {
        return Ok(e.to_string());
    }
    Err(match e {
        CloudError::Api { code, detail, .. } if code == "invalid-credentials" || code == "unauthorized" => {
            UploadError::AuthFailed(format!("{code}: {detail}"))
        }
        CloudError::Api { code, detail, .. } => UploadError::Rejected { code, detail },
        other => UploadError::Rejected {
            code: "protocol".into(),
            detail: other.to_string(),
        },
    })
}

pub fn verify_receipt(receipt: &UploadReceipt, envelope: &[u8]) -> Result<(), UploadError> {
    let digest = sha256_hex(envelope);
    if receipt.trace_ref != digest || receipt.sha256 != digest || receipt.size_bytes != envelope.len() as u64 {
        return Err(UploadError::ReceiptMismatch(format!(
            "got {} ({} bytes), expected {digest} ({} bytes)",
            receipt.trace_ref,
            receipt.size_bytes,
            envelope.len()
        )));
    }
    Ok(())
}

/// Uploads with exponential backoff on transient failures and checks the
/// receipt against the envelope.
pub async fn upload_with_retry(
    target: &CloudTarget,
    manifest: &SessionManifest,
    envelope: &[u8],
    retry: &RetryPolicy,
) -> Result<UploadReceipt, UploadError> {
    let mut delay = retry.initial_delay_ms;
    let mut last = String::new();
    for attempt in 0..retry.attempts.max(1) {
        if attempt > 0 {
            tokio::time::sleep(Duration::from_millis(delay)).await;
            delay = (delay * 2).min(retry.max_delay_ms);
        }
        let token = match target.client.token(&target.client_id, &target.client_secret).await {
            Ok(t) => t.access_token,
            Err(e) => {
                last = classify(e)?;
                continue;
            }
        };
        match target.client.upload(&token, manifest, envelope.to_vec()).await {
            Ok(receipt) => {
                verify_receipt(&receipt, envelope)?;
                return Ok(receipt);
            }
            Err(e) => last = classify(e)?,
        }
        tracing::warn!(attempt, "upload failed: {last}");
    }
    Err(UploadError::Unreachable(last))
}

#[derive(Debug, Default)]
pub struct FlushReport {
    pub uploaded: Vec<(String, UploadReceipt)>,
    pub deferred: Vec<(String, String)>,
    pub rejected: Vec<(String, String)>,
}

/// Tries every pending entry once (with retries); successes leave the outbox.
pub async fn flush(outbox: &Outbox, target: &CloudTarget, retry: &RetryPolicy) -> Result<FlushReport, UploadError> {
    let mut report = FlushReport::default();
    for entry in outbox.list()? {
        let (manifest, envelope) = outbox.load(&entry)?;
        match upload_with_retry(target, &manifest, &envelope, retry).await {
            Ok(receipt) => {
                outbox.remove(&entry)?;
                report.uploaded.push((entry.id, receipt));
            }
            Err(UploadError::Unreachable(e)) => report.deferred.push((entry.id, e)),
            Err(e @ UploadError::AuthFailed(_)) => return Err(e),
            Err(e) => {
                outbox.reject(&entry)?;
                report.rejected.push((entry.id, e.to_string()));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uuid::Uuid;

    fn manifest() -> SessionManifest {
        SessionManifest {
            session_id: Uuid::new_v4(),
            driver_id: "d".into(),
            vehicle_id: "v".into(),
            started_at: 0,
            ended_at: 1,
            devices: vec![],
            row_count: 0,
            csv_sha256: sha256_hex(b""),
            schema_version: "1".into(),
        }
    }

    #[test]
    fn put_list_load_remove() {
        let dir = tempfile::tempdir().unwrap();
        let ob = Outbox::open(dir.path()).unwrap();
        let m = manifest();
        let e = ob.put(&m, b"FDTL1...").unwrap();
        assert_eq!(ob.list().unwrap(), vec![e.clone()]);
        let (m2, env) = ob.load(&e).unwrap();
        assert_eq!((m2, env.as_slice()), (m, &b"FDTL1..."[..]));
        ob.reject(&e).unwrap();
        assert!(ob.list().unwrap().is_empty());
        assert!(dir.path().join("rejected").join(format!("{}.fdtl", e.id)).is_file());
    }

    #[test]
    fn half_written_entry_is_invisible() {
        let dir = tempfile::tempdir().unwrap();
        let ob = Outbox::open(dir.path()).unwrap();
        let m = manifest();
        std::fs::write(dir.path().join(format!("{}.manifest.json", m.session_id)), m.to_json()).unwrap();
        assert!(ob.list().unwrap().is_empty());
    }

    #[test]
    fn receipt_check() {
        let env = b"payload";
        let good = UploadReceipt {
            trace_ref: sha256_hex(env),
            size_bytes: 7,
            sha256: sha256_hex(env),
        };
        assert!(verify_receipt(&good, env).is_ok());
        let bad = UploadReceipt {
            size_bytes: 8,
            ..good
        };
        assert!(matches!(verify_receipt(&bad, env), Err(UploadError::ReceiptMismatch(_))));
    }
}

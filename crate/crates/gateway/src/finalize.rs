use std::path::PathBuf;

use fogdrive_cloud::UploadReceipt;
use fogdrive_core::trace::sha256_hex;
use thiserror::Error;

use crate::envelope::{seal, TraceKey};
use crate::outbox::{flush, CloudTarget, FlushReport, Outbox, RetryPolicy, UploadError};
use crate::session::{GatewayConfig, SessionOutput};

#[derive(Debug, Error)]
pub enum FinalizeError {
    #[error("trace key missing")]
    KeyMissing,
    #[error(transparent)]
    Upload(#[from] UploadError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delivery {
    Uploaded(UploadReceipt),
    /// Still in the outbox; retried on the next flush.
    Queued(String),
    Rejected(String),
    /// No cloud target configured.
    LocalOnly,
}

#[derive(Debug)]
pub struct Finalized {
    pub envelope: Vec<u8>,
    pub envelope_sha256: String,
    pub delivery: Delivery,
    /// Plaintext copy, if still on disk.
    pub plaintext: Option<PathBuf>,
    /// Other entries that went out in the same flush.
    pub flushed: FlushReport,
}

/// Keeps a plaintext copy, seals, queues in the outbox, then flushes the
/// outbox. The plaintext is dropped once the receipt checks out, unless the
/// config asks to keep it.
pub async fn finalize_and_upload(
    cfg: &GatewayConfig,
    output: &SessionOutput,
    key: Option<&TraceKey>,
    target: Option<&CloudTarget>,
    retry: &RetryPolicy,
) -> Result<Finalized, FinalizeError> {
    let key = key.ok_or(FinalizeError::KeyMissing)?;
    let id = output.manifest.session_id.to_string();
    let trace_dir = cfg.trace_dir();
    std::fs::create_dir_all(&trace_dir)?;
    let csv_path = trace_dir.join(format!("{id}.csv"));
    let manifest_path = trace_dir.join(format!("{id}.manifest.json"));
    std::fs::write(&csv_path, &output.csv)?;
    std::fs::write(&manifest_path, output.manifest.to_json())?;

    let envelope = seal(key, &output.manifest.to_json(), &output.csv);
    let envelope_sha256 = sha256_hex(&envelope);
    let outbox = Outbox::open(cfg.outbox_dir())?;
    outbox.put(&output.manifest, &envelope)?;

    let Some(target) = target else {
        return Ok(Finalized {
            envelope,
            envelope_sha256,
            delivery: Delivery::LocalOnly,
            plaintext: Some(csv_path),
            flushed: FlushReport::default(),
        });
    };
    let mut report = flush(&outbox, target, retry).await?;
    let delivery = if let Some(i) = report.uploaded.iter().position(|(e, _)| *e == id) {
        Delivery::Uploaded(report.uploaded.remove(i).1)
    } else if let Some(i) = report.deferred.iter().position(|(e, _)| *e == id) {
        Delivery::Queued(report.deferred.remove(i).1)
    } else if let Some(i) = report.rejected.iter().position(|(e, _)| *e == id) {
        Delivery::Rejected(report.rejected.remove(i).1)
    } else {
        Delivery::Queued("not attempted".into())
    };
    let mut plaintext = Some(csv_path.clone());
    if matches!(delivery, Delivery::Uploaded(_)) && !cfg.keep_plaintext {
        std::fs::remove_file(&csv_path)?;
        std::fs::remove_file(&manifest_path)?;
        plaintext = None;
    }
    Ok(Finalized {
        envelope,
        envelope_sha256,
        delivery,
        plaintext,
        flushed: report,
    })
}

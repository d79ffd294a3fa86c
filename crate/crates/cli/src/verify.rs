//! `verify`: download a trace and re-check everything about it.

use fogdrive_cloud::CloudClient;
use fogdrive_core::trace::{parse_csv, sha256_hex, validate_rows, Channel, SessionManifest, SCHEMA_VERSION};
use fogdrive_gateway::envelope::MAGIC;
use fogdrive_gateway::{open, TraceKey};
use serde::Serialize;

use crate::error::{Stage, StageError, StageExt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub trace_ref: String,
    pub rows: Option<usize>,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status == Status::Pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.status != Status::Pass).collect()
    }

    pub fn text(&self) -> String {
        let mut s = format!("trace {}\n", self.trace_ref);
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "ok  ",
                Status::Fail => "FAIL",
                Status::Skip => "skip",
            };
            s.push_str(&format!("  {tag} {:<15} {}\n", c.name, c.detail));
        }
        s
    }

    fn push(&mut self, name: &'static str, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            status: if ok { Status::Pass } else { Status::Fail },
            detail: detail.into(),
        });
    }

    fn skip(&mut self, names: &[&'static str], why: &str) {
        for &name in names {
            self.checks.push(Check {
                name,
                status: Status::Skip,
                detail: why.into(),
            });
        }
    }
}

const AFTER_DECRYPT: [&str; 5] = ["manifest-hash", "row-count", "csv-parse", "row-invariants", "alert-rows"];

/// Checks a downloaded envelope against its manifest.
pub fn verify_envelope(trace_ref: &str, envelope: &[u8], manifest: &SessionManifest, key: &TraceKey) -> VerifyReport {
    let mut r = VerifyReport {
        trace_ref: trace_ref.into(),
        rows: None,
        checks: Vec::new(),
    };
    let digest = sha256_hex(envelope);
    r.push("content-address", digest == trace_ref, format!("sha256 {digest}"));
    r.push(
        "envelope-format",
        envelope.starts_with(MAGIC),
        format!("{} bytes", envelope.len()),
    );
    r.push(
        "schema-version",
        manifest.schema_version == SCHEMA_VERSION,
        format!("schema {}", manifest.schema_version),
    );
    let csv = match open(key, &manifest.to_json(), envelope) {
        Ok(csv) => {
            r.push("decrypt", true, "authenticated");
            csv
        }
        Err(e) => {
            r.push("decrypt", false, format!("{e}; envelope, manifest or key do not match"));
            r.skip(&AFTER_DECRYPT, "no plaintext");
            return r;
        }
    };
    let digest = sha256_hex(&csv);
    r.push(
        "manifest-hash",
        digest == manifest.csv_sha256,
        format!("csv sha256 {digest}, manifest {}", manifest.csv_sha256),
    );
    let rows = match parse_csv(&csv) {
        Ok(rows) => rows,
        Err(e) => {
            r.push("row-count", false, "unparseable csv");
            r.push("csv-parse", false, e.to_string());
            r.skip(&AFTER_DECRYPT[3..], "no rows");
            return r;
        }
    };
    r.rows = Some(rows.len());
    r.push(
        "row-count",
        rows.len() as u64 == manifest.row_count,
        format!("{} rows, manifest {}", rows.len(), manifest.row_count),
    );
    r.push("csv-parse", true, "header and rows parse");
    let problems = validate_rows(&rows);
    r.push(
        "row-invariants",
        problems.is_empty(),
        if problems.is_empty() {
            "all rows valid".to_string()
        } else {
            problems.join("; ")
        },
    );
    let alerts = rows.iter().filter(|x| x.channel == Channel::Alert).count();
    let known = rows
        .iter()
        .filter(|x| x.channel == Channel::Alert)
        .all(|x| ["hr-high", "stress", "overspeed"].contains(&x.value.as_str()));
    r.push("alert-rows", known, format!("{alerts} alert rows"));
    r
}

/// Downloads `trace_ref` with a read token and verifies it.
pub async fn verify_remote(
    client: &CloudClient,
    client_id: &str,
    client_secret: &str,
    trace_ref: &str,
    key: &TraceKey,
) -> Result<VerifyReport, StageError> {
    let token = client
        .token(client_id, client_secret)
        .await
        .stage(Stage::Download)?
        .access_token;
    let (blob, meta) = client.get(&token, trace_ref).await.stage(Stage::Download)?;
    Ok(verify_envelope(trace_ref, &blob, &meta.manifest, key))
}

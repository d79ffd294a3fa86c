//! `replay`: run the gateway's post-processing again over a recorded trace.
//!
//! Interpolated and alert rows are discarded, then gap filling and alert
//! rules are applied to the measured rows exactly as at session end. With the
//! manifest at hand the nominal periods match the original session, so a
//! replay under the same config reproduces the trace byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use fogdrive_core::trace::{parse_csv, sha256_hex, Channel, SessionManifest, TraceRow};
use fogdrive_gateway::rows::{TRAFFIC_SOURCE, WEATHER_SOURCE};
use fogdrive_gateway::{default_period, finalize_rows, open, AlertEvent, NominalPeriods, TraceKey};
use serde::Serialize;

use crate::config::Config;
use crate::error::{Stage, StageError, StageExt};

#[derive(Debug, Clone, Serialize)]
pub struct ReplaySummary {
    pub rows_in: usize,
    pub measured: usize,
    pub interpolated: usize,
    pub alerts: Vec<AlertEvent>,
    pub per_source: BTreeMap<String, usize>,
    pub csv_sha256: String,
    /// Whether the replay reproduced the input bytes; only meaningful when
    /// the manifest supplied the original devices.
    pub identical: Option<bool>,
    pub manifest_problems: Vec<String>,
}

impl ReplaySummary {
    pub fn text(&self) -> String {
        let mut s = format!(
            "rows in: {}, measured: {}, interpolated after replay: {}\n",
            self.rows_in, self.measured, self.interpolated
        );
        for (src, n) in &self.per_source {
            s.push_str(&format!("  {src}: {n}\n"));
        }
        for a in &self.alerts {
            s.push_str(&format!("  alert {} at {} from {}\n", a.rule, a.at, a.source));
        }
        match self.identical {
            Some(true) => s.push_str("replay reproduces the trace exactly\n"),
            Some(false) => s.push_str("replay differs from the trace\n"),
            None => s.push_str("no manifest: periods inferred, byte comparison skipped\n"),
        }
        for p in &self.manifest_problems {
            s.push_str(&format!("  manifest: {p}\n"));
        }
        s
    }
}

/// Median spacing of each source's measured timestamps.
fn inferred_periods(rows: &[&TraceRow]) -> NominalPeriods {
    let mut times: HashMap<&str, Vec<i64>> = HashMap::new();
    for r in rows {
        times.entry(r.source.as_str()).or_default().push(r.timestamp_ms);
    }
    let mut p = NominalPeriods::default();
    for (src, mut ts) in times {
        ts.sort_unstable();
        ts.dedup();
        let mut gaps: Vec<i64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
        if gaps.is_empty() {
            continue;
        }
        gaps.sort_unstable();
        p.set(src, gaps[gaps.len() / 2]);
    }
    p
}

pub fn replay(csv: &[u8], manifest: Option<&SessionManifest>, cfg: &Config) -> Result<ReplaySummary, StageError> {
    let rows = parse_csv(csv).stage(Stage::Replay)?;
    let measured: Vec<TraceRow> = rows
        .iter()
        .filter(|r| !r.interpolated && r.channel != Channel::Alert)
        .cloned()
        .collect();
    let periods = match manifest {
        Some(m) => {
            let mut p = NominalPeriods::default();
            for d in &m.devices {
                p.set(d.device_id.clone(), default_period(d.kind, &cfg.gateway));
            }
            for s in [TRAFFIC_SOURCE, WEATHER_SOURCE] {
                p.set(s, cfg.trip.context_period_ms as i64);
            }
            p
        }
        None => inferred_periods(&measured.iter().collect::<Vec<_>>()),
    };
    let mut per_source = BTreeMap::new();
    for r in &measured {
        *per_source.entry(r.source.clone()).or_insert(0) += 1;
    }
    let n = measured.len();
    let (out, alerts, interpolated, _) = finalize_rows(measured, &cfg.gateway, &periods);
    Ok(ReplaySummary {
        rows_in: rows.len(),
        measured: n,
        interpolated,
        alerts,
        per_source,
        csv_sha256: sha256_hex(&out),
        identical: manifest.map(|_| out == csv),
        manifest_problems: manifest.map(|m| m.check_against(csv)).unwrap_or_default(),
    })
}

/// Reads a plaintext CSV, or an `.fdtl` envelope plus its manifest.
pub fn load_trace(
    path: &Path,
    manifest_path: Option<&Path>,
    key: Option<&TraceKey>,
) -> Result<(Vec<u8>, Option<SessionManifest>), StageError> {
    let bytes = std::fs::read(path).stage(Stage::Replay)?;
    let sibling = |ext: &str| {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stem = name.split('.').next().unwrap_or(name);
        path.with_file_name(format!("{stem}.{ext}"))
    };
    let manifest_path = manifest_path.map(Path::to_path_buf).or_else(|| {
        let p = sibling("manifest.json");
        p.is_file().then_some(p)
    });
    let manifest: Option<SessionManifest> = match &manifest_path {
        Some(p) => Some(serde_json::from_slice(&std::fs::read(p).stage(Stage::Replay)?).stage(Stage::Replay)?),
        None => None,
    };
    if path.extension().is_some_and(|e| e == "fdtl") {
        let m = manifest
            .as_ref()
            .ok_or_else(|| StageError::new(Stage::Replay, "an envelope needs its manifest"))?;
        let key = key.ok_or_else(|| StageError::new(Stage::Replay, "an envelope needs the trace key"))?;
        let csv = open(key, &m.to_json(), &bytes).stage(Stage::Replay)?;
        return Ok((csv, manifest));
    }
    Ok((bytes, manifest))
}

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use fogdrive_core::pairing::{DeviceKind, PairError, Pairable, Pairing};
use fogdrive_core::trace::{render_csv, sha256_hex, sort_rows, SessionManifest, TraceRow, SCHEMA_VERSION};
use fogdrive_core::Clock;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{broadcast, mpsc};
use tokio::task::JoinHandle;
use uuid::Uuid;

use crate::alerts::{scan, AlertConfig, AlertEngine, AlertEvent};
use crate::gapfill::{fill_gaps, NominalPeriods};
use crate::rows::{to_rows, Sample};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub gateway_id: String,
    /// Holds `outbox/`, `traces/` and `erase.log`.
    pub data_dir: PathBuf,
    pub alerts: AlertConfig,
    pub gap_max_factor: f64,
    pub queue_capacity: usize,
    /// Period assumed for each OBD channel when filling gaps.
    pub obd_nominal_ms: i64,
    pub keep_plaintext: bool,
    /// Overrides `data_dir/outbox`.
    pub outbox: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            gateway_id: "gw-1".into(),
            data_dir: PathBuf::from("fogdrive-data"),
            alerts: AlertConfig::default(),
            gap_max_factor: 3.0,
            queue_capacity: 1024,
            obd_nominal_ms: 600,
            keep_plaintext: false,
            outbox: None,
        }
    }
}

impl GatewayConfig {
    pub fn outbox_dir(&self) -> PathBuf {
        self.outbox.clone().unwrap_or_else(|| self.data_dir.join("outbox"))
    }

    pub fn trace_dir(&self) -> PathBuf {
        self.data_dir.join("traces")
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no devices paired")]
    NoDevices,
    #[error("a session is already active")]
    SessionActive,
    #[error("no active session")]
    NoActiveSession,
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("unknown source {0}")]
    UnknownSource(String),
    #[error("no active session; sample dropped")]
    SessionInactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EraseScope {
    Device,
    Local,
    Both,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EraseReport {
    pub device_samples: usize,
    pub local_files: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionHandle {
    pub session_id: Uuid,
}

/// Result of closing a session.
#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub csv: Vec<u8>,
    pub manifest: SessionManifest,
    pub alerts: Vec<AlertEvent>,
    pub samples_ingested: u64,
    pub interpolated_rows: usize,
}

struct Registered {
    pairing: Pairing,
    device: Arc<dyn Pairable>,
}

struct Active {
    handle: SessionHandle,
    driver_id: String,
    vehicle_id: String,
    started_at: i64,
    devices: Vec<Pairing>,
    aggregator: JoinHandle<Aggregate>,
}

struct Slot {
    tx: mpsc::Sender<Vec<TraceRow>>,
}

#[derive(Default)]
struct Aggregate {
    rows: Vec<TraceRow>,
    samples: u64,
}

/// The coordinating node: pairs devices, accepts samples while a session is
/// open and turns them into a sealed-ready trace when it closes.
pub struct Gateway {
    cfg: GatewayConfig,
    clock: Arc<dyn Clock>,
    devices: Mutex<BTreeMap<String, Registered>>,
    services: Mutex<BTreeSet<String>>,
    periods: Mutex<NominalPeriods>,
    slot: RwLock<Option<Slot>>,
    control: tokio::sync::Mutex<Option<Active>>,
    dropped: AtomicU64,
    live_alerts: broadcast::Sender<AlertEvent>,
}

/// Nominal sampling period assumed for a device kind.
pub fn default_period(kind: DeviceKind, cfg: &GatewayConfig) -> i64 {
    match kind {
        DeviceKind::PolarH7 => 2_000,
        DeviceKind::SpireRespirator => 5_000,
        DeviceKind::MiBandM1S => 10_000,
        DeviceKind::Gps => 1_000,
        DeviceKind::Obd => cfg.obd_nominal_ms,
    }
}

impl Gateway {
    pub fn new(cfg: GatewayConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            cfg,
            clock,
            devices: Mutex::new(BTreeMap::new()),
            services: Mutex::new(BTreeSet::new()),
            periods: Mutex::new(NominalPeriods::default()),
            slot: RwLock::new(None),
            control: tokio::sync::Mutex::new(None),
            dropped: AtomicU64::new(0),
            live_alerts: broadcast::channel(256).0,
        }
    }

    pub fn id(&self) -> &str {
        &self.cfg.gateway_id
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn now_ms(&self) -> i64 {
        self.clock.now_ms()
    }

    /// Bonds and locks a device to this gateway. Re-pairing an owned device
    /// returns the original record.
    pub fn pair(&self, device: Arc<dyn Pairable>) -> Result<Pairing, PairError> {
        device.bond(&self.cfg.gateway_id)?;
        let mut devices = self.devices.lock().expect("device registry");
        let id = device.device_id().to_string();
        if let Some(r) = devices.get(&id) {
            return Ok(r.pairing.clone());
        }
        let pairing = Pairing {
            device_id: id.clone(),
            kind: device.kind(),
            locked_to: self.cfg.gateway_id.clone(),
            paired_at: self.clock.now_ms(),
        };
        self.periods
            .lock()
            .expect("periods")
            .set(id.clone(), default_period(device.kind(), &self.cfg));
        tracing::info!(device = %id, kind = device.kind().as_str(), "paired");
        devices.insert(
            id,
            Registered {
                pairing: pairing.clone(),
                device,
            },
        );
        Ok(pairing)
    }

    pub fn pairings(&self) -> Vec<Pairing> {
        self.devices
            .lock()
            .expect("device registry")
            .values()
            .map(|r| r.pairing.clone())
            .collect()
    }

    /// Accepts rows from a named non-device source such as an external service.
    pub fn register_service(&self, name: &str, period_ms: i64) {
        self.services.lock().expect("services").insert(name.to_string());
        self.periods.lock().expect("periods").set(name, period_ms);
    }

    pub fn set_nominal_period(&self, source: &str, period_ms: i64) {
        self.periods.lock().expect("periods").set(source, period_ms);
    }

    fn is_known(&self, source: &str) -> bool {
        self.devices.lock().expect("device registry").contains_key(source)
            || self.services.lock().expect("services").contains(source)
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::SeqCst)
    }

    pub fn subscribe_alerts(&self) -> broadcast::Receiver<AlertEvent> {
        self.live_alerts.subscribe()
    }

    pub async fn session_active(&self) -> bool {
        self.control.lock().await.is_some()
    }

    pub async fn start_session(&self, driver_id: &str, vehicle_id: &str) -> Result<SessionHandle, GatewayError> {
        let mut control = self.control.lock().await;
        if control.is_some() {
            return Err(GatewayError::SessionActive);
        }
        let devices = self.pairings();
        if devices.is_empty() {
            return Err(GatewayError::NoDevices);
        }
        let (tx, rx) = mpsc::channel(self.cfg.queue_capacity.max(1));
        let aggregator = tokio::spawn(aggregate(rx, self.cfg.alerts.clone(), self.live_alerts.clone()));
        let handle = SessionHandle {
            session_id: Uuid::new_v4(),
        };
        *self.slot.write().expect("session slot") = Some(Slot { tx });
        tracing::info!(session = %handle.session_id, driver_id, vehicle_id, "session started");
        *control = Some(Active {
            handle: handle.clone(),
            driver_id: driver_id.into(),
            vehicle_id: vehicle_id.into(),
            started_at: self.clock.now_ms(),
            devices,
            aggregator,
        });
        Ok(handle)
    }

    /// Stamps, converts and queues a sample. Returns the number of rows.
    pub async fn ingest(&self, sample: Sample) -> Result<usize, IngestError> {
        if !self.is_known(sample.source()) {
            return Err(IngestError::UnknownSource(sample.source().to_string()));
        }
        let arrival = self.clock.now_ms();
        let tx = self.slot.read().expect("session slot").as_ref().map(|s| s.tx.clone());
        let Some(tx) = tx else {
            self.dropped.fetch_add(1, Ordering::SeqCst);
            return Err(IngestError::SessionInactive);
        };
        let rows = to_rows(&sample, arrival);
        let n = rows.len();
        if tx.send(rows).await.is_err() {
            self.dropped.fetch_add(1, Ordering::SeqCst);
            return Err(IngestError::SessionInactive);
        }
        Ok(n)
    }

    pub async fn end_session(&self, handle: &SessionHandle) -> Result<SessionOutput, GatewayError> {
        let mut control = self.control.lock().await;
        match control.as_ref() {
            Some(a) if a.handle == *handle => {}
            _ => return Err(GatewayError::NoActiveSession),
        }
        let active = control.take().expect("checked above");
        self.slot.write().expect("session slot").take();
        let agg = active
            .aggregator
            .await
            .map_err(|e| io::Error::other(format!("aggregator failed: {e}")))?;
        let ended_at = self.clock.now_ms().max(active.started_at);
        let periods = self.periods.lock().expect("periods").clone();
        let (csv, alerts, interpolated_rows, row_count) = finalize_rows(agg.rows, &self.cfg, &periods);
        let manifest = SessionManifest {
            session_id: active.handle.session_id,
            driver_id: active.driver_id,
            vehicle_id: active.vehicle_id,
            started_at: active.started_at,
            ended_at,
            devices: active.devices,
            row_count,
            csv_sha256: sha256_hex(&csv),
            schema_version: SCHEMA_VERSION.into(),
        };
        tracing::info!(session = %manifest.session_id, rows = row_count, alerts = alerts.len(), "session ended");
        Ok(SessionOutput {
            csv,
            manifest,
            alerts,
            samples_ingested: agg.samples,
            interpolated_rows,
        })
    }

    /// Clears device memory and/or the local outbox and trace directories.
    pub async fn erase(&self, scope: EraseScope) -> Result<EraseReport, GatewayError> {
        let control = self.control.lock().await;
        if control.is_some() {
            return Err(GatewayError::SessionActive);
        }
        let mut report = EraseReport::default();
        if matches!(scope, EraseScope::Device | EraseScope::Both) {
            let devices = self.devices.lock().expect("device registry");
            report.device_samples = devices.values().map(|r| r.device.erase_stored()).sum();
        }
        if matches!(scope, EraseScope::Local | EraseScope::Both) {
            report.local_files = clear_dir(&self.cfg.outbox_dir())? + clear_dir(&self.cfg.trace_dir())?;
        }
        log_erasure(&self.cfg.data_dir, self.clock.now_ms(), scope, &report)?;
        tracing::info!(?scope, ?report, "erased");
        Ok(report)
    }
}

async fn aggregate(
    mut rx: mpsc::Receiver<Vec<TraceRow>>,
    alerts: AlertConfig,
    live: broadcast::Sender<AlertEvent>,
) -> Aggregate {
    let mut agg = Aggregate::default();
    let mut engine = AlertEngine::new(alerts);
    while let Some(batch) = rx.recv().await {
        agg.samples += 1;
        for row in &batch {
            if let Some(ev) = engine.observe(row) {
                let _ = live.send(ev);
            }
        }
        agg.rows.extend(batch);
    }
    agg
}

/// Sort, gap-fill, evaluate alerts on measured rows, render.
pub fn finalize_rows(
    mut rows: Vec<TraceRow>,
    cfg: &GatewayConfig,
    periods: &NominalPeriods,
) -> (Vec<u8>, Vec<AlertEvent>, usize, u64) {
    sort_rows(&mut rows);
    let filled = fill_gaps(&rows, periods, cfg.gap_max_factor);
    let alerts = scan(&cfg.alerts, &rows);
    let interpolated = filled.len();
    rows.extend(filled);
    rows.extend(alerts.iter().map(AlertEvent::to_row));
    sort_rows(&mut rows);
    let count = rows.len() as u64;
    (render_csv(&rows), alerts, interpolated, count)
}

fn clear_dir(dir: &Path) -> io::Result<usize> {
    if !dir.exists() {
        return Ok(0);
    }
    let mut n = 0;
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            n += clear_dir(&path)?;
            std::fs::remove_dir(&path)?;
        } else {
            std::fs::remove_file(&path)?;
            n += 1;
        }
    }
    Ok(n)
}

fn log_erasure(data_dir: &Path, at: i64, scope: EraseScope, report: &EraseReport) -> io::Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(data_dir)?;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(data_dir.join("erase.log"))?;
    writeln!(
        f,
        "{}",
        serde_json::json!({"at": at, "scope": scope, "device_samples": report.device_samples, "local_files": report.local_files})
    )
}

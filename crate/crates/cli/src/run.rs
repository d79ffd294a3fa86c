//! `run`: one trip end to end, from simulators to a verified upload receipt.

use std::sync::Arc;
use std::time::Duration;

use fogdrive_cloud::{ClientEntry, CloudClient, CloudConfig, RunningServer, Scope, UploadReceipt};
use fogdrive_core::vehicle::DriveProfile;
use fogdrive_core::{Clock, SystemClock, TokioClock};
use fogdrive_external::{ContextProvider, HttpProvider, StubProvider};
use fogdrive_gateway::{
    finalize_and_upload, AlertEvent, CloudTarget, Delivery, FinalizeError, Outbox, SessionOutput, TraceKey, TripRig,
};
use serde::Serialize;

use crate::config::Config;
use crate::error::{Stage, StageError, StageExt};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub duration_s: f64,
    /// Spawn the cloud store in-process and create a key if none exists.
    pub self_contained: bool,
    /// Run against the wall clock instead of simulated time.
    pub realtime: bool,
    /// A queued (not yet uploaded) trace counts as success.
    pub accept_queued: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub session_id: String,
    pub driver_id: String,
    pub vehicle_id: String,
    pub duration_s: f64,
    pub rows: u64,
    pub interpolated_rows: usize,
    pub samples_ingested: u64,
    pub obd_replies: u64,
    pub context_failures: u64,
    pub alerts: Vec<AlertEvent>,
    pub csv_sha256: String,
    pub envelope_sha256: String,
    /// uploaded, queued or local-only.
    pub delivery: String,
    pub receipt: Option<UploadReceipt>,
    pub cloud_url: Option<String>,
    pub outbox_pending: usize,
}

pub fn resolve_profile(cfg: &Config) -> Result<DriveProfile, StageError> {
    let profile = match &cfg.profile.file {
        Some(path) => {
            let text = std::fs::read_to_string(path).stage(Stage::Config)?;
            toml::from_str::<DriveProfile>(&text).stage(Stage::Config)?
        }
        None => DriveProfile::builtin(&cfg.profile.name).stage(Stage::Config)?,
    };
    profile.validate().stage(Stage::Config)?;
    Ok(profile)
}

/// Cloud store served from `data_dir/cloud`, accepting the configured
/// gateway credentials.
pub async fn spawn_local_cloud(cfg: &Config) -> Result<RunningServer, StageError> {
    let cloud_cfg = CloudConfig {
        data_dir: cfg.gateway.data_dir.join("cloud"),
        clients: vec![ClientEntry {
            client_id: cfg.cloud.client_id.clone(),
            client_secret: cfg.cloud.client_secret.clone(),
            scopes: vec![Scope::Upload, Scope::Read],
        }],
        ..CloudConfig::default()
    };
    fogdrive_cloud::spawn(&cloud_cfg, Arc::new(SystemClock), "127.0.0.1:0".parse().expect("loopback"))
        .await
        .stage(Stage::Cloud)
}

/// Configured key, or a fresh one persisted next to the data when allowed.
pub fn load_or_create_key(cfg: &Config, create: bool) -> Result<Option<TraceKey>, StageError> {
    if let Some(key) = cfg.trace_key().stage(Stage::Seal)? {
        return Ok(Some(key));
    }
    if !create {
        return Ok(None);
    }
    let key = TraceKey::generate();
    let path = cfg.key_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).stage(Stage::Seal)?;
    }
    std::fs::write(&path, key.to_hex()).stage(Stage::Seal)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o600)).stage(Stage::Seal)?;
    }
    Ok(Some(key))
}

struct TripResult {
    output: SessionOutput,
    obd_replies: u64,
    context_failures: u64,
}

async fn drive(cfg: &Config, profile: DriveProfile, duration: Duration, clock: TokioClock, context: Arc<dyn ContextProvider>) -> Result<TripResult, StageError> {
    let mut rig = TripRig::build(cfg.gateway.clone(), cfg.trip.clone(), profile, clock, context)
        .await
        .stage(Stage::Session)?;
    let output = rig.run(duration).await.stage(Stage::Session)?;
    Ok(TripResult {
        output,
        obd_replies: rig.obd_stats.replies(),
        context_failures: rig.context_stats.failures(),
    })
}

/// Simulated time runs on its own paused runtime so that network I/O in the
/// rest of the command keeps real timeouts.
fn drive_simulated(cfg: &Config, profile: DriveProfile, duration: Duration) -> Result<TripResult, StageError> {
    let cfg = cfg.clone();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .start_paused(true)
            .build()
            .stage(Stage::Session)?;
        rt.block_on(async {
            let clock = TokioClock::new(SystemClock.now_ms());
            let stub = Arc::new(StubProvider::new(cfg.trip.seed, Arc::new(clock) as Arc<dyn Clock>));
            drive(&cfg, profile, duration, clock, stub).await
        })
    })
    .join()
    .map_err(|_| StageError::new(Stage::Session, "session thread panicked"))?
}

pub async fn run(cfg: &Config, opts: &RunOptions) -> Result<RunSummary, StageError> {
    if !(opts.duration_s >= 0.0 && opts.duration_s.is_finite()) {
        return Err(StageError::new(Stage::Config, format!("bad duration {}", opts.duration_s)));
    }
    let profile = resolve_profile(cfg)?;
    let key = load_or_create_key(cfg, opts.self_contained)?;
    let server = if opts.self_contained && cfg.cloud.base_url.is_none() {
        Some(spawn_local_cloud(cfg).await?)
    } else {
        None
    };
    let cloud_url = server.as_ref().map(RunningServer::base_url).or_else(|| cfg.cloud.base_url.clone());

    let duration = Duration::from_secs_f64(opts.duration_s);
    let trip = if opts.realtime {
        let clock = TokioClock::from_system();
        let context: Arc<dyn ContextProvider> = match &cfg.external.base_url {
            Some(url) => Arc::new(HttpProvider::new(url.clone())),
            None => Arc::new(StubProvider::new(cfg.trip.seed, Arc::new(clock))),
        };
        drive(cfg, profile, duration, clock, context).await?
    } else {
        if cfg.external.base_url.is_some() {
            tracing::warn!("external.base_url ignored under simulated time; using the in-process stub");
        }
        drive_simulated(cfg, profile, duration)?
    };
    let out = &trip.output;

    let target = cloud_url.as_ref().map(|url| CloudTarget {
        client: CloudClient::new(url.clone()),
        client_id: cfg.cloud.client_id.clone(),
        client_secret: cfg.cloud.client_secret.clone(),
    });
    let done = match finalize_and_upload(&cfg.gateway, out, key.as_ref(), target.as_ref(), &cfg.cloud.retry).await {
        Ok(done) => done,
        Err(FinalizeError::KeyMissing) => {
            return Err(StageError::new(Stage::Seal, "no trace key configured (key.file or key.hex)"))
        }
        Err(FinalizeError::Io(e)) => return Err(StageError::new(Stage::Seal, e)),
        Err(FinalizeError::Upload(e)) => return Err(StageError::new(Stage::Upload, e)),
    };
    let outbox_pending = Outbox::open(cfg.gateway.outbox_dir())
        .and_then(|o| o.list())
        .map(|l| l.len())
        .unwrap_or(0);

    let (delivery, receipt) = match done.delivery {
        Delivery::Uploaded(r) => ("uploaded", Some(r)),
        Delivery::Queued(reason) if opts.accept_queued => {
            tracing::warn!("upload deferred: {reason}");
            ("queued", None)
        }
        Delivery::Queued(reason) => {
            return Err(StageError::new(
                Stage::Upload,
                format!("cloud unreachable, trace kept in {}: {reason}", cfg.gateway.outbox_dir().display()),
            ))
        }
        Delivery::Rejected(reason) => return Err(StageError::new(Stage::Upload, reason)),
        Delivery::LocalOnly if opts.accept_queued => ("local-only", None),
        Delivery::LocalOnly => {
            return Err(StageError::new(
                Stage::Upload,
                "no cloud base_url configured; pass --self-contained or --outbox-dir",
            ))
        }
    };

    Ok(RunSummary {
        session_id: out.manifest.session_id.to_string(),
        driver_id: out.manifest.driver_id.clone(),
        vehicle_id: out.manifest.vehicle_id.clone(),
        duration_s: opts.duration_s,
        rows: out.manifest.row_count,
        interpolated_rows: out.interpolated_rows,
        samples_ingested: out.samples_ingested,
        obd_replies: trip.obd_replies,
        context_failures: trip.context_failures,
        alerts: out.alerts.clone(),
        csv_sha256: out.manifest.csv_sha256.clone(),
        envelope_sha256: done.envelope_sha256,
        delivery: delivery.into(),
        receipt,
        cloud_url,
        outbox_pending,
    })
}

impl RunSummary {
    pub fn text(&self) -> String {
        let mut s = format!(
            "session {} ({} / {}), {} s\nrows: {} ({} interpolated), obd replies: {}, alerts: {}\ncsv sha256: {}\n",
            self.session_id,
            self.driver_id,
            self.vehicle_id,
            self.duration_s,
            self.rows,
            self.interpolated_rows,
            self.obd_replies,
            self.alerts.len(),
            self.csv_sha256,
        );
        for a in &self.alerts {
            s.push_str(&format!("  alert {} at {} from {}\n", a.rule, a.at, a.source));
        }
        match &self.receipt {
            Some(r) => s.push_str(&format!("uploaded: trace_ref {} ({} bytes)\n", r.trace_ref, r.size_bytes)),
            None => s.push_str(&format!("{}: {} trace(s) waiting in the outbox\n", self.delivery, self.outbox_pending)),
        }
        s
    }
}

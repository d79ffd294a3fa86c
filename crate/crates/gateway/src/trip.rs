//! Wires a simulated vehicle, wearables and context services to a gateway
//! and drives one session.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use fogdrive_core::pairing::{DeviceKind, SimpleDevice};
use fogdrive_core::vehicle::{listen, DriveProfile, Ecu, SimConfig, SimError};
use fogdrive_core::wearable::{subscribe, MiBand, PhysioParams, PolarH7, Spire, WearableError};
use fogdrive_core::{Clock, TokioClock};
use fogdrive_external::{ContextProvider, LimitPolicy, RateLimited};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinSet;

use crate::obd::{run_obd_loop, EcuConnector, ObdConnector, ObdLoopConfig, ObdStats, TcpConnector};
use crate::producers::{forward, poll_band, run_context, run_gps, ContextStats, LatestFix, VehicleProbe};
use crate::rows::{TRAFFIC_SOURCE, WEATHER_SOURCE};
use crate::session::{Gateway, GatewayConfig, GatewayError, SessionOutput};

pub const OBD_DEVICE: &str = "obd-1";
pub const GPS_DEVICE: &str = "gps-1";
pub const BAND_DEVICE: &str = "miband-1";
pub const POLAR_DEVICE: &str = "polar-1";
pub const SPIRE_DEVICE: &str = "spire-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObdTransport {
    /// In-memory byte pipe to the ECU.
    #[default]
    InProcess,
    /// ECU served on a loopback TCP port.
    Tcp,
    /// An ECU already listening at `obd_endpoint`.
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TripConfig {
    pub driver_id: String,
    pub vehicle_id: String,
    pub seed: u64,
    pub sim: SimConfig,
    pub physio: PhysioParams,
    pub obd: ObdLoopConfig,
    pub obd_transport: ObdTransport,
    pub obd_endpoint: Option<SocketAddr>,
    pub gps_period_ms: u64,
    pub band_poll_ms: u64,
    pub context_period_ms: u64,
    pub context_quota_per_min: usize,
    pub context_policy: LimitPolicy,
}

impl Default for TripConfig {
    fn default() -> Self {
        Self {
            driver_id: "driver-1".into(),
            vehicle_id: "vehicle-1".into(),
            seed: 42,
            sim: SimConfig::default(),
            physio: PhysioParams::default(),
            obd: ObdLoopConfig::default(),
            obd_transport: ObdTransport::InProcess,
            obd_endpoint: None,
            gps_period_ms: 1_000,
            band_poll_ms: 10_000,
            context_period_ms: 30_000,
            context_quota_per_min: 60,
            context_policy: LimitPolicy::Reject,
        }
    }
}

#[derive(Debug, Error)]
pub enum TripError {
    #[error("vehicle: {0}")]
    Sim(#[from] SimError),
    #[error("wearable: {0}")]
    Wearable(#[from] WearableError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("remote obd transport needs an endpoint")]
    NoEndpoint,
}

/// Everything taking part in one simulated trip.
pub struct TripRig {
    pub cfg: TripConfig,
    pub clock: TokioClock,
    pub gateway: Arc<Gateway>,
    pub ecu: Arc<Ecu>,
    pub band: Arc<MiBand>,
    pub polar: Arc<PolarH7>,
    pub spire: Arc<Spire>,
    pub obd_device: Arc<SimpleDevice>,
    pub gps_device: Arc<SimpleDevice>,
    /// Present for the in-process transport; lets tests cut the link.
    pub ecu_link: Option<Arc<EcuConnector>>,
    pub obd_stats: Arc<ObdStats>,
    pub context_stats: Arc<ContextStats>,
    connector: Arc<dyn ObdConnector>,
    context: Arc<dyn ContextProvider>,
    probe: VehicleProbe,
    background: JoinSet<()>,
}

impl TripRig {
    /// Builds the rig and pairs every device. Time zero of the vehicle
    /// simulation is the moment this is called.
    pub async fn build(
        gateway_cfg: GatewayConfig,
        cfg: TripConfig,
        profile: DriveProfile,
        clock: TokioClock,
        context: Arc<dyn ContextProvider>,
    ) -> Result<Self, TripError> {
        let sim = SimConfig {
            seed: cfg.seed,
            ..cfg.sim.clone()
        };
        let ecu = Arc::new(Ecu::new(profile, &sim)?);
        let mut background = JoinSet::new();
        let (connector, ecu_link): (Arc<dyn ObdConnector>, _) = match cfg.obd_transport {
            ObdTransport::InProcess => {
                let link = Arc::new(EcuConnector::new(ecu.clone(), clock));
                (link.clone(), Some(link))
            }
            ObdTransport::Tcp => {
                let listener = TcpListener::bind("127.0.0.1:0").await?;
                let addr = listener.local_addr()?;
                let served = ecu.clone();
                background.spawn(async move {
                    if let Err(e) = listen(served, listener, clock).await {
                        tracing::error!("ecu listener stopped: {e}");
                    }
                });
                (Arc::new(TcpConnector(addr)), None)
            }
            ObdTransport::Remote => {
                let addr = cfg.obd_endpoint.ok_or(TripError::NoEndpoint)?;
                (Arc::new(TcpConnector(addr)), None)
            }
        };

        let gateway = Arc::new(Gateway::new(gateway_cfg, Arc::new(clock)));
        let probe = VehicleProbe::new(ecu.clone(), clock);
        let accel = Arc::new(probe.clone());
        let band = Arc::new(MiBand::new(BAND_DEVICE, cfg.physio, cfg.seed ^ 0x01, accel.clone()));
        let polar = Arc::new(PolarH7::new(POLAR_DEVICE, cfg.physio, cfg.seed ^ 0x02, accel.clone()));
        let spire = Arc::new(Spire::new(SPIRE_DEVICE, cfg.physio, cfg.seed ^ 0x03, accel));
        let obd_device = Arc::new(SimpleDevice::new(OBD_DEVICE, DeviceKind::Obd));
        let gps_device = Arc::new(SimpleDevice::new(GPS_DEVICE, DeviceKind::Gps));
        gateway.pair(obd_device.clone()).map_err(GatewayError::from)?;
        gateway.pair(gps_device.clone()).map_err(GatewayError::from)?;
        gateway.pair(band.clone()).map_err(GatewayError::from)?;
        gateway.pair(polar.clone()).map_err(GatewayError::from)?;
        gateway.pair(spire.clone()).map_err(GatewayError::from)?;
        gateway.register_service(TRAFFIC_SOURCE, cfg.context_period_ms as i64);
        gateway.register_service(WEATHER_SOURCE, cfg.context_period_ms as i64);

        let limited: Arc<dyn ContextProvider> = Arc::new(RateLimited::new(
            context,
            cfg.context_quota_per_min,
            cfg.context_policy,
            Arc::new(clock) as Arc<dyn Clock>,
        ));
        Ok(Self {
            cfg,
            clock,
            gateway,
            ecu,
            band,
            polar,
            spire,
            obd_device,
            gps_device,
            ecu_link,
            obd_stats: Arc::new(ObdStats::default()),
            context_stats: Arc::new(ContextStats::default()),
            connector,
            context: limited,
            probe,
            background,
        })
    }

    /// Runs one session for `duration` and returns the closed trace.
    pub async fn run(&mut self, duration: Duration) -> Result<SessionOutput, TripError> {
        let handle = self
            .gateway
            .start_session(&self.cfg.driver_id, &self.cfg.vehicle_id)
            .await?;
        let gw = &self.gateway;
        let clock: Arc<dyn Clock> = Arc::new(self.clock);
        let latest = Arc::new(LatestFix::default());
        let mut tasks = JoinSet::new();
        let started = (|| -> Result<(), WearableError> {
            tasks.spawn(run_obd_loop(
                gw.clone(),
                OBD_DEVICE.into(),
                self.connector.clone(),
                self.cfg.obd.clone(),
                self.obd_stats.clone(),
            ));
            tasks.spawn(forward(gw.clone(), subscribe(self.polar.clone(), clock.clone())?));
            tasks.spawn(forward(gw.clone(), subscribe(self.spire.clone(), clock.clone())?));
            tasks.spawn(poll_band(gw.clone(), self.band.clone(), self.cfg.band_poll_ms));
            tasks.spawn(run_gps(
                gw.clone(),
                GPS_DEVICE.into(),
                self.probe.clone(),
                latest.clone(),
                self.cfg.gps_period_ms,
            ));
            tasks.spawn(run_context(
                gw.clone(),
                self.context.clone(),
                latest.clone(),
                self.cfg.context_period_ms,
                self.context_stats.clone(),
            ));
            Ok(())
        })();
        if started.is_ok() {
            tokio::time::sleep(duration).await;
        }
        tasks.abort_all();
        while tasks.join_next().await.is_some() {}
        let output = self.gateway.end_session(&handle).await?;
        started?;
        Ok(output)
    }
}

impl Drop for TripRig {
    fn drop(&mut self) {
        self.background.abort_all();
    }
}

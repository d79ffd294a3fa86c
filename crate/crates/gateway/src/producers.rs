//! Producer tasks feeding a gateway session: GPS, wearables, context.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use fogdrive_core::vehicle::{Ecu, GeoPoint};
use fogdrive_core::wearable::{AccelSource, MiBand, Subscription, WearableSample};
use fogdrive_core::TokioClock;
use fogdrive_external::ContextProvider;
use tokio::time::{interval, MissedTickBehavior};

use crate::rows::{Sample, TRAFFIC_SOURCE, WEATHER_SOURCE};
use crate::session::Gateway;

/// Reads position and acceleration off the simulated vehicle at the
/// current sim time.
#[derive(Clone)]
pub struct VehicleProbe {
    ecu: Arc<Ecu>,
    clock: TokioClock,
}

impl VehicleProbe {
    pub fn new(ecu: Arc<Ecu>, clock: TokioClock) -> Self {
        Self { ecu, clock }
    }

    pub fn position(&self) -> GeoPoint {
        self.ecu.snapshot_at(self.clock.elapsed_ms()).position
    }
}

impl AccelSource for VehicleProbe {
    fn accel_ms2(&self, _at_ms: i64) -> f64 {
        self.ecu.snapshot_at(self.clock.elapsed_ms()).accel_ms2
    }
}

/// Most recent GPS fix, shared with the context poller.
#[derive(Debug, Default)]
pub struct LatestFix(Mutex<Option<GeoPoint>>);

impl LatestFix {
    pub fn get(&self) -> Option<GeoPoint> {
        *self.0.lock().expect("fix")
    }

    pub fn set(&self, p: GeoPoint) {
        *self.0.lock().expect("fix") = Some(p);
    }
}

pub async fn run_gps(gateway: Arc<Gateway>, source: String, probe: VehicleProbe, latest: Arc<LatestFix>, period_ms: u64) {
    let mut tick = interval(Duration::from_millis(period_ms));
    tick.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tick.tick().await;
        let fix = probe.position();
        latest.set(fix);
        let _ = gateway
            .ingest(Sample::Gps {
                source: source.clone(),
                fix,
            })
            .await;
    }
}

/// Forwards a push subscription into the session.
pub async fn forward(gateway: Arc<Gateway>, mut sub: Subscription) {
    while let Some(s) = sub.recv().await {
        let _ = gateway.ingest(Sample::Wearable(s)).await;
    }
}

/// Polls an on-demand heart-rate device.
pub async fn poll_band(gateway: Arc<Gateway>, band: Arc<MiBand>, period_ms: u64) {
    let mut tick = interval(Duration::from_millis(period_ms));
    tick.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tick.tick().await;
        match band.poll_heart_rate(gateway.now_ms()) {
            Ok(h) => {
                let _ = gateway.ingest(Sample::Wearable(WearableSample::Heart(h))).await;
            }
            Err(e) => tracing::warn!("band poll failed: {e}"),
        }
    }
}

#[derive(Debug, Default)]
pub struct ContextStats {
    pub rounds: AtomicU64,
    pub failures: AtomicU64,
}

impl ContextStats {
    pub fn rounds(&self) -> u64 {
        self.rounds.load(Ordering::SeqCst)
    }

    pub fn failures(&self) -> u64 {
        self.failures.load(Ordering::SeqCst)
    }
}

/// Every period, fetches traffic and weather at the latest fix. Failures are
/// logged and skipped; the session is never affected.
pub async fn run_context(
    gateway: Arc<Gateway>,
    provider: Arc<dyn ContextProvider>,
    latest: Arc<LatestFix>,
    period_ms: u64,
    stats: Arc<ContextStats>,
) {
    let mut tick = interval(Duration::from_millis(period_ms.max(1)));
    tick.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tick.tick().await;
        let Some(fix) = latest.get() else {
            tracing::debug!("context round skipped: no fix yet");
            continue;
        };
        stats.rounds.fetch_add(1, Ordering::SeqCst);
        let (flow, weather) = tokio::join!(
            provider.flow_segment(fix.lat, fix.lon),
            provider.current_weather(fix.lat, fix.lon)
        );
        match flow {
            Ok(segment) => {
                let _ = gateway
                    .ingest(Sample::Flow {
                        source: TRAFFIC_SOURCE.into(),
                        segment,
                    })
                    .await;
            }
            Err(e) => {
                stats.failures.fetch_add(1, Ordering::SeqCst);
                tracing::warn!("traffic fetch failed: {e}");
            }
        }
        match weather {
            Ok(observation) => {
                let _ = gateway
                    .ingest(Sample::Weather {
                        source: WEATHER_SOURCE.into(),
                        observation,
                    })
                    .await;
            }
            Err(e) => {
                stats.failures.fetch_add(1, Ordering::SeqCst);
                tracing::warn!("weather fetch failed: {e}");
            }
        }
    }
}

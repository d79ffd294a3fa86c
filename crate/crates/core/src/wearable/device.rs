use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use super::physio::{PhysioModel, PhysioParams};
use super::sample::{HeartSample, RespState, RespirationSample, WearableSample};
use crate::clock::Clock;
use crate::pairing::{BondState, DeviceKind, PairError, Pairable};

/// Samples kept on the device until erased.
const DEVICE_BUFFER_CAP: usize = 4096;
const SUBSCRIPTION_QUEUE: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WearableError {
    #[error("device {0} is not paired")]
    NotPaired(String),
    #[error("device {0} already has a subscriber")]
    AlreadySubscribed(String),
}

/// Source of the vehicle's current acceleration, used to couple physiology
/// to driving.
pub trait AccelSource: Send + Sync {
    fn accel_ms2(&self, at_ms: i64) -> f64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoMotion;

impl AccelSource for NoMotion {
    fn accel_ms2(&self, _at_ms: i64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Cadence {
    /// Fresh value at most once per `min_interval_ms`; polls in between get
    /// the cached one.
    OnDemand { min_interval_ms: i64 },
    /// Pushed every `period_ms`, each emission offset by up to ±`jitter_ms`.
    Push { period_ms: i64, jitter_ms: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub kind: DeviceKind,
    pub cadence: Cadence,
}

impl DeviceSpec {
    pub const MI_BAND: DeviceSpec = DeviceSpec {
        kind: DeviceKind::MiBandM1S,
        cadence: Cadence::OnDemand { min_interval_ms: 10_000 },
    };
    pub const POLAR_H7: DeviceSpec = DeviceSpec {
        kind: DeviceKind::PolarH7,
        cadence: Cadence::Push { period_ms: 2_000, jitter_ms: 20 },
    };
    pub const SPIRE: DeviceSpec = DeviceSpec {
        kind: DeviceKind::SpireRespirator,
        cadence: Cadence::Push { period_ms: 5_000, jitter_ms: 40 },
    };
}

struct DeviceCore {
    bond: BondState,
    spec: DeviceSpec,
    physio: Mutex<PhysioModel>,
    accel: Arc<dyn AccelSource>,
    buffer: Mutex<VecDeque<WearableSample>>,
    subscribed: AtomicBool,
    seed: u64,
}

impl DeviceCore {
    fn new(id: String, spec: DeviceSpec, params: PhysioParams, seed: u64, accel: Arc<dyn AccelSource>) -> Self {
        Self {
            bond: BondState::new(id),
            spec,
            physio: Mutex::new(PhysioModel::new(params, seed)),
            accel,
            buffer: Mutex::new(VecDeque::new()),
            subscribed: AtomicBool::new(false),
            seed,
        }
    }

    fn ensure_paired(&self) -> Result<(), WearableError> {
        if self.bond.is_bonded() {
            Ok(())
        } else {
            Err(WearableError::NotPaired(self.bond.device_id().to_string()))
        }
    }

    fn store(&self, sample: WearableSample) {
        let mut buf = self.buffer.lock().expect("device buffer");
        if buf.len() == DEVICE_BUFFER_CAP {
            buf.pop_front();
        }
        buf.push_back(sample);
    }
}

macro_rules! device_common {
    ($ty:ty) => {
        impl Pairable for $ty {
            fn device_id(&self) -> &str {
                self.core.bond.device_id()
            }
            fn kind(&self) -> DeviceKind {
                self.core.spec.kind
            }
            fn bond(&self, gateway_id: &str) -> Result<(), PairError> {
                self.core.bond.bond(gateway_id)
            }
            fn owner(&self) -> Option<String> {
                self.core.bond.owner()
            }
            fn erase_stored(&self) -> usize {
                self.erase()
            }
        }

        impl $ty {
            pub fn spec(&self) -> DeviceSpec {
                self.core.spec
            }

            pub fn bond_state(&self) -> &BondState {
                &self.core.bond
            }

            /// Samples held in device memory.
            pub fn stored(&self) -> Vec<WearableSample> {
                self.core.buffer.lock().expect("device buffer").iter().cloned().collect()
            }

            /// Clears device memory, returning how many samples were dropped.
            pub fn erase(&self) -> usize {
                let mut buf = self.core.buffer.lock().expect("device buffer");
                let n = buf.len();
                buf.clear();
                n
            }
        }
    };
}

/// Wrist tracker with on-demand heart-rate measurement.
pub struct MiBand {
    core: DeviceCore,
    cache: Mutex<Option<HeartSample>>,
}

device_common!(MiBand);

impl MiBand {
    pub fn new(id: impl Into<String>, params: PhysioParams, seed: u64, accel: Arc<dyn AccelSource>) -> Self {
        Self {
            core: DeviceCore::new(id.into(), DeviceSpec::MI_BAND, params, seed, accel),
            cache: Mutex::new(None),
        }
    }

    pub fn poll_heart_rate(&self, at_ms: i64) -> Result<HeartSample, WearableError> {
        self.core.ensure_paired()?;
        let Cadence::OnDemand { min_interval_ms } = self.core.spec.cadence else {
            unreachable!("mi band is on-demand")
        };
        let mut cache = self.cache.lock().expect("mi band cache");
        if let Some(c) = cache.as_ref() {
            if at_ms - c.measured_at < min_interval_ms {
                return Ok(c.clone());
            }
        }
        let accel = self.core.accel.accel_ms2(at_ms);
        let (bpm, _) = self.core.physio.lock().expect("physio").sample(accel, at_ms);
        let sample = HeartSample {
            bpm,
            rr_intervals_ms: Vec::new(),
            measured_at: at_ms,
            device: self.device_id().to_string(),
        };
        self.core.store(WearableSample::Heart(sample.clone()));
        *cache = Some(sample.clone());
        Ok(sample)
    }
}

/// Chest strap pushing heart rate and R-R intervals.
pub struct PolarH7 {
    core: DeviceCore,
}

device_common!(PolarH7);

impl PolarH7 {
    pub fn new(id: impl Into<String>, params: PhysioParams, seed: u64, accel: Arc<dyn AccelSource>) -> Self {
        Self {
            core: DeviceCore::new(id.into(), DeviceSpec::POLAR_H7, params, seed, accel),
        }
    }
}

/// Breathing sensor pushing respiration rate and a derived state.
pub struct Spire {
    core: DeviceCore,
}

device_common!(Spire);

impl Spire {
    pub fn new(id: impl Into<String>, params: PhysioParams, seed: u64, accel: Arc<dyn AccelSource>) -> Self {
        Self {
            core: DeviceCore::new(id.into(), DeviceSpec::SPIRE, params, seed, accel),
        }
    }
}

/// 1-4 R-R intervals whose mean is exactly 60000/bpm before clamping.
fn rr_intervals(rng: &mut ChaCha8Rng, bpm: f64) -> Vec<f64> {
    let base = 60_000.0 / bpm;
    let n = rng.random_range(1..=4usize);
    let mut rr: Vec<f64> = (0..n)
        .map(|_| base * (1.0 + rng.random_range(-0.015..=0.015)))
        .collect();
    let shift = rr.iter().sum::<f64>() / n as f64 - base;
    for v in &mut rr {
        *v = (*v - shift).clamp(250.0, 2000.0);
    }
    rr
}

/// A device that emits on its own schedule once subscribed.
pub trait PushDevice: Pairable + 'static {
    fn spec(&self) -> DeviceSpec;
    fn generate(&self, at_ms: i64) -> WearableSample;
    #[doc(hidden)]
    fn subscription_flag(&self) -> &AtomicBool;
    #[doc(hidden)]
    fn seed(&self) -> u64;
    #[doc(hidden)]
    fn ensure_paired(&self) -> Result<(), WearableError>;
}

impl PushDevice for PolarH7 {
    fn spec(&self) -> DeviceSpec {
        self.core.spec
    }
    fn generate(&self, at_ms: i64) -> WearableSample {
        let accel = self.core.accel.accel_ms2(at_ms);
        let mut physio = self.core.physio.lock().expect("physio");
        let (bpm, _) = physio.sample(accel, at_ms);
        let rr = rr_intervals(physio.rng(), bpm);
        drop(physio);
        let sample = WearableSample::Heart(HeartSample {
            bpm,
            rr_intervals_ms: rr,
            measured_at: at_ms,
            device: self.device_id().to_string(),
        });
        self.core.store(sample.clone());
        sample
    }
    fn subscription_flag(&self) -> &AtomicBool {
        &self.core.subscribed
    }
    fn seed(&self) -> u64 {
        self.core.seed
    }
    fn ensure_paired(&self) -> Result<(), WearableError> {
        self.core.ensure_paired()
    }
}

impl PushDevice for Spire {
    fn spec(&self) -> DeviceSpec {
        self.core.spec
    }
    fn generate(&self, at_ms: i64) -> WearableSample {
        let accel = self.core.accel.accel_ms2(at_ms);
        let (_, breaths) = self.core.physio.lock().expect("physio").sample(accel, at_ms);
        let sample = WearableSample::Respiration(RespirationSample {
            breaths_per_min: breaths,
            state: RespState::from_breaths(breaths),
            measured_at: at_ms,
            device: self.device_id().to_string(),
        });
        self.core.store(sample.clone());
        sample
    }
    fn subscription_flag(&self) -> &AtomicBool {
        &self.core.subscribed
    }
    fn seed(&self) -> u64 {
        self.core.seed
    }
    fn ensure_paired(&self) -> Result<(), WearableError> {
        self.core.ensure_paired()
    }
}

/// Live sample stream from a push device. Dropping it ends the subscription.
pub struct Subscription {
    rx: mpsc::Receiver<WearableSample>,
    task: JoinHandle<()>,
}

impl Subscription {
    pub async fn recv(&mut self) -> Option<WearableSample> {
        self.rx.recv().await
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.task.abort();
    }
}

struct FlagGuard<D: PushDevice>(Arc<D>);

impl<D: PushDevice> Drop for FlagGuard<D> {
    fn drop(&mut self) {
        self.0.subscription_flag().store(false, Ordering::SeqCst);
    }
}

/// Starts the device's push schedule. Emission `k` is due at
/// `start + k * period ± jitter`, so counts do not drift with jitter.
pub fn subscribe<D: PushDevice>(device: Arc<D>, clock: Arc<dyn Clock>) -> Result<Subscription, WearableError> {
    device.ensure_paired()?;
    if device.subscription_flag().swap(true, Ordering::SeqCst) {
        return Err(WearableError::AlreadySubscribed(device.device_id().to_string()));
    }
    let Cadence::Push { period_ms, jitter_ms } = device.spec().cadence else {
        device.subscription_flag().store(false, Ordering::SeqCst);
        unreachable!("push devices have a push cadence")
    };
    let (tx, rx) = mpsc::channel(SUBSCRIPTION_QUEUE);
    let guard = FlagGuard(device);
    let task = tokio::spawn(async move {
        let device = &guard.0;
        let mut rng = ChaCha8Rng::seed_from_u64(device.seed() ^ 0x5EED_CAFE);
        let origin = tokio::time::Instant::now();
        for k in 1u64.. {
            let jitter = if jitter_ms > 0 { rng.random_range(-jitter_ms..=jitter_ms) } else { 0 };
            let due_ms = (k as i64 * period_ms + jitter).max(0) as u64;
            tokio::time::sleep_until(origin + Duration::from_millis(due_ms)).await;
            let sample = device.generate(clock.now_ms());
            if tx.send(sample).await.is_err() {
                break;
            }
        }
    });
    Ok(Subscription { rx, task })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{ManualClock, TokioClock};

    fn paired<T: Pairable>(d: T) -> T {
        d.bond("gw").unwrap();
        d
    }

    #[test]
    fn mi_band_caches_within_window() {
        let band = paired(MiBand::new("mb", PhysioParams::default(), 1, Arc::new(NoMotion)));
        let a = band.poll_heart_rate(1_000).unwrap();
        let b = band.poll_heart_rate(2_000).unwrap();
        assert_eq!(a.measured_at, b.measured_at);
        let c = band.poll_heart_rate(12_000).unwrap();
        assert_ne!(c.measured_at, a.measured_at);
        assert_eq!(band.stored().len(), 2);
    }

    #[test]
    fn unpaired_poll_fails() {
        let band = MiBand::new("mb", PhysioParams::default(), 1, Arc::new(NoMotion));
        assert_eq!(band.poll_heart_rate(0), Err(WearableError::NotPaired("mb".into())));
    }

    #[test]
    fn mi_band_at_most_one_value_per_ten_seconds() {
        let band = paired(MiBand::new("mb", PhysioParams::default(), 1, Arc::new(NoMotion)));
        let mut distinct = std::collections::BTreeSet::new();
        for t in (0..=300_000).step_by(1_000) {
            distinct.insert(band.poll_heart_rate(t).unwrap().measured_at);
        }
        assert_eq!(distinct.len(), 31);
        let v: Vec<_> = distinct.into_iter().collect();
        assert!(v.windows(2).all(|w| w[1] - w[0] >= 10_000));
    }

    #[test]
    fn rr_intervals_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..5_000 {
            let bpm = 30.0 + (i as f64) * 190.0 / 5_000.0;
            let rr = rr_intervals(&mut rng, bpm);
            assert!((1..=4).contains(&rr.len()));
            assert!(rr.iter().all(|v| (250.0..=2000.0).contains(v)));
            let mean = rr.iter().sum::<f64>() / rr.len() as f64;
            assert!((bpm - 60_000.0 / mean).abs() / bpm <= 0.02);
        }
    }

    #[test]
    fn erase_clears_device_memory() {
        let polar = paired(PolarH7::new("p", PhysioParams::default(), 1, Arc::new(NoMotion)));
        for t in 0..5 {
            polar.generate(t * 2000);
        }
        assert_eq!(polar.erase(), 5);
        assert!(polar.stored().is_empty());
    }

    #[tokio::test(start_paused = true)]
    async fn polar_cadence_over_a_minute() {
        let polar = Arc::new(paired(PolarH7::new("p", PhysioParams::default(), 5, Arc::new(NoMotion))));
        let clock: Arc<dyn Clock> = Arc::new(TokioClock::new(0));
        let mut sub = subscribe(polar.clone(), clock.clone()).unwrap();
        let mut samples = Vec::new();
        while clock.now_ms() <= 60_000 {
            samples.push(sub.recv().await.unwrap());
        }
        samples.pop();
        assert!((29..=31).contains(&samples.len()), "{}", samples.len());
        for (k, s) in samples.iter().enumerate() {
            let due = (k as i64 + 1) * 2_000;
            assert!((s.measured_at() - due).abs() <= 50);
            let WearableSample::Heart(h) = s else { panic!() };
            assert!(h.rr_mismatch().unwrap() <= 0.02);
        }
        assert!(samples.windows(2).all(|w| w[1].measured_at() > w[0].measured_at()));
    }

    #[tokio::test(start_paused = true)]
    async fn double_subscribe_rejected_until_dropped() {
        let spire = Arc::new(paired(Spire::new("s", PhysioParams::default(), 5, Arc::new(NoMotion))));
        let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(0));
        let sub = subscribe(spire.clone(), clock.clone()).unwrap();
        assert_eq!(
            subscribe(spire.clone(), clock.clone()).err(),
            Some(WearableError::AlreadySubscribed("s".into()))
        );
        drop(sub);
        tokio::task::yield_now().await;
        assert!(subscribe(spire, clock).is_ok());
    }

    #[tokio::test(start_paused = true)]
    async fn unpaired_subscribe_rejected() {
        let spire = Arc::new(Spire::new("s", PhysioParams::default(), 5, Arc::new(NoMotion)));
        let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(0));
        assert_eq!(subscribe(spire, clock).err(), Some(WearableError::NotPaired("s".into())));
    }
}

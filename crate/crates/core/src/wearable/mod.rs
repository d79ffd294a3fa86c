//! Simulated wearables: on-demand wrist band, push-based chest strap and
//! breathing sensor, all driven by a shared physiology model.

mod device;
mod physio;
mod sample;
pub mod wire;

use std::sync::Arc;

pub use device::{
    subscribe, AccelSource, Cadence, DeviceSpec, MiBand, NoMotion, PolarH7, PushDevice, Spire, Subscription,
    WearableError,
};
pub use physio::{PhysioModel, PhysioParams};
pub use sample::{HeartSample, RespState, RespirationSample, WearableSample};

use crate::pairing::{DeviceKind, Pairable};

/// Any of the supported wearables.
#[derive(Clone)]
pub enum AnyWearable {
    MiBand(Arc<MiBand>),
    Polar(Arc<PolarH7>),
    Spire(Arc<Spire>),
}

impl AnyWearable {
    pub fn as_pairable(&self) -> &dyn Pairable {
        match self {
            AnyWearable::MiBand(d) => d.as_ref(),
            AnyWearable::Polar(d) => d.as_ref(),
            AnyWearable::Spire(d) => d.as_ref(),
        }
    }

    pub fn kind(&self) -> DeviceKind {
        self.as_pairable().kind()
    }

    pub fn erase(&self) -> usize {
        match self {
            AnyWearable::MiBand(d) => d.erase(),
            AnyWearable::Polar(d) => d.erase(),
            AnyWearable::Spire(d) => d.erase(),
        }
    }

    pub fn stored_len(&self) -> usize {
        match self {
            AnyWearable::MiBand(d) => d.stored().len(),
            AnyWearable::Polar(d) => d.stored().len(),
            AnyWearable::Spire(d) => d.stored().len(),
        }
    }
}

//! Command-line driver for the fogdrive pipeline: trips, OBD benches,
//! verification, replay and erasure.

pub mod bench;
pub mod config;
pub mod error;
pub mod replay;
pub mod run;
pub mod verify;

use std::sync::Arc;

use fogdrive_core::pairing::Pairable;
use fogdrive_core::wearable::{MiBand, NoMotion, PolarH7, Spire};
use fogdrive_core::SystemClock;
use fogdrive_gateway::trip::{BAND_DEVICE, POLAR_DEVICE, SPIRE_DEVICE};
use fogdrive_gateway::{EraseReport, EraseScope, Gateway};

pub use config::Config;
pub use error::{Stage, StageError};

/// Erases through a gateway that has paired this host's wearables.
pub async fn erase(cfg: &Config, scope: EraseScope) -> Result<EraseReport, StageError> {
    let gw = Gateway::new(cfg.gateway.clone(), Arc::new(SystemClock));
    let p = cfg.trip.physio;
    let seed = cfg.trip.seed;
    let devices: [Arc<dyn Pairable>; 3] = [
        Arc::new(MiBand::new(BAND_DEVICE, p, seed, Arc::new(NoMotion))),
        Arc::new(PolarH7::new(POLAR_DEVICE, p, seed, Arc::new(NoMotion))),
        Arc::new(Spire::new(SPIRE_DEVICE, p, seed, Arc::new(NoMotion))),
    ];
    for d in devices {
        gw.pair(d).map_err(|e| StageError::new(Stage::Erase, e))?;
    }
    gw.erase(scope).await.map_err(|e| StageError::new(Stage::Erase, e))
}

//! Device bonding: a device locks to the first gateway that pairs with it.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    MiBandM1S,
    PolarH7,
    SpireRespirator,
    Obd,
    Gps,
}

impl DeviceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeviceKind::MiBandM1S => "mi_band_m1_s",
            DeviceKind::PolarH7 => "polar_h7",
            DeviceKind::SpireRespirator => "spire_respirator",
            DeviceKind::Obd => "obd",
            DeviceKind::Gps => "gps",
        }
    }

    pub fn is_wearable(&self) -> bool {
        matches!(
            self,
            DeviceKind::MiBandM1S | DeviceKind::PolarH7 | DeviceKind::SpireRespirator
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PairError {
    #[error("device {device} is locked to gateway {owner}")]
    Locked { device: String, owner: String },
    #[error("device {0} unreachable")]
    Unreachable(String),
}

/// Bond record kept by the gateway and written into the session manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub device_id: String,
    pub kind: DeviceKind,
    pub locked_to: String,
    pub paired_at: i64,
}

pub trait Pairable: Send + Sync {
    fn device_id(&self) -> &str;
    fn kind(&self) -> DeviceKind;
    /// Bonds to `gateway_id`. Idempotent for the owning gateway.
    fn bond(&self, gateway_id: &str) -> Result<(), PairError>;
    fn owner(&self) -> Option<String>;
    /// Clears samples held in device memory; returns how many were dropped.
    fn erase_stored(&self) -> usize {
        0
    }
}

/// Device-side bonding state.
#[derive(Debug)]
pub struct BondState {
    device_id: String,
    owner: Mutex<Option<String>>,
    reachable: AtomicBool,
}

impl BondState {
    pub fn new(device_id: impl Into<String>) -> Self {
        Self {
            device_id: device_id.into(),
            owner: Mutex::new(None),
            reachable: AtomicBool::new(true),
        }
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn set_reachable(&self, reachable: bool) {
        self.reachable.store(reachable, Ordering::SeqCst);
    }

    pub fn bond(&self, gateway_id: &str) -> Result<(), PairError> {
        if !self.reachable.load(Ordering::SeqCst) {
            return Err(PairError::Unreachable(self.device_id.clone()));
        }
        let mut owner = self.owner.lock().expect("bond lock");
        match owner.as_deref() {
            Some(o) if o != gateway_id => Err(PairError::Locked {
                device: self.device_id.clone(),
                owner: o.to_string(),
            }),
            _ => {
                *owner = Some(gateway_id.to_string());
                Ok(())
            }
        }
    }

    pub fn owner(&self) -> Option<String> {
        self.owner.lock().expect("bond lock").clone()
    }

    pub fn is_bonded(&self) -> bool {
        self.owner().is_some()
    }
}

/// A source with no behaviour beyond bonding (OBD adapter, phone GPS).
#[derive(Debug)]
pub struct SimpleDevice {
    kind: DeviceKind,
    bond: BondState,
}

impl SimpleDevice {
    pub fn new(device_id: impl Into<String>, kind: DeviceKind) -> Self {
        Self {
            kind,
            bond: BondState::new(device_id),
        }
    }

    pub fn bond_state(&self) -> &BondState {
        &self.bond
    }
}

impl Pairable for SimpleDevice {
    fn device_id(&self) -> &str {
        self.bond.device_id()
    }
    fn kind(&self) -> DeviceKind {
        self.kind
    }
    fn bond(&self, gateway_id: &str) -> Result<(), PairError> {
        self.bond.bond(gateway_id)
    }
    fn owner(&self) -> Option<String> {
        self.bond.owner()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_rejects_foreign_gateway() {
        let b = BondState::new("polar-1");
        b.bond("gw-a").unwrap();
        b.bond("gw-a").unwrap();
        assert_eq!(
            b.bond("gw-b"),
            Err(PairError::Locked {
                device: "polar-1".into(),
                owner: "gw-a".into()
            })
        );
        assert_eq!(b.owner().as_deref(), Some("gw-a"));
    }

    #[test]
    fn unreachable_device() {
        let d = SimpleDevice::new("obd-1", DeviceKind::Obd);
        d.bond_state().set_reachable(false);
        assert_eq!(d.bond("gw"), Err(PairError::Unreachable("obd-1".into())));
        assert_eq!(d.owner(), None);
    }

    #[test]
    fn kind_names_match_serde() {
        for k in [
            DeviceKind::MiBandM1S,
            DeviceKind::PolarH7,
            DeviceKind::SpireRespirator,
            DeviceKind::Obd,
            DeviceKind::Gps,
        ] {
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
    }
}

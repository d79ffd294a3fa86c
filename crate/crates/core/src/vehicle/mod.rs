//! Simulated vehicle: kinematics along a scripted drive and an ECU that
//! answers OBD requests with sampled reply latency.

mod ecu;
mod latency;
mod profile;
mod state;

pub use ecu::{listen, serve_connection, Ecu, EcuReply, SimConfig, SimError, Simulator, DEFAULT_TICK_MS};
pub use latency::{LatencyModel, LatencyModelError, LatencySampler};
pub use profile::{DriveProfile, GeoPoint, ProfileError, Segment};
pub use state::{gear_for, rpm_for, step, throttle_for, DynamicsParams, VehicleState, IDLE_RPM, MAX_RPM};

use serde::{Deserialize, Serialize};

/// The three collected channels from one polling cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleReading {
    pub speed_kmh: f64,
    pub rpm: f64,
    pub throttle_pct: f64,
    pub sampled_at: u64,
}

impl From<&VehicleState> for VehicleReading {
    fn from(s: &VehicleState) -> Self {
        Self {
            speed_kmh: s.speed_kmh,
            rpm: s.rpm,
            throttle_pct: s.throttle_pct,
            sampled_at: s.sim_time_ms,
        }
    }
}

/// Runs a whole trip at the simulator tick rate, one reading per tick.
pub fn run_trip(profile: DriveProfile, duration_s: f64, config: &SimConfig) -> Result<Vec<VehicleReading>, SimError> {
    let mut sim = Simulator::new(profile, config)?;
    if duration_s.is_nan() || duration_s <= 0.0 {
        return Ok(Vec::new());
    }
    let ticks = (duration_s * 1000.0 / config.tick_ms as f64).floor() as usize;
    Ok((0..ticks).map(|_| VehicleReading::from(&sim.tick())).collect())
}

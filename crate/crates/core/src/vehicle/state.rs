use serde::{Deserialize, Serialize};

use super::profile::{DriveProfile, GeoPoint};

pub const IDLE_RPM: f64 = 800.0;
pub const MAX_RPM: f64 = 6500.0;
/// Upshift points in km/h: gear n+1 engages at `UPSHIFT_KMH[n-1]`.
pub const UPSHIFT_KMH: [f64; 4] = [20.0, 40.0, 60.0, 90.0];

/// Documented constants for the algebraic throttle rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Throttle percent per m/s² of acceleration.
    pub throttle_gain: f64,
    /// Throttle percent per km/h of speed (drag compensation).
    pub drag_coeff: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            throttle_gain: 12.0,
            drag_coeff: 0.35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub speed_kmh: f64,
    pub rpm: f64,
    pub throttle_pct: f64,
    pub gear: u8,
    pub odometer_m: f64,
    pub position: GeoPoint,
    pub sim_time_ms: u64,
    /// Acceleration over the last step, m/s².
    pub accel_ms2: f64,
}

impl VehicleState {
    pub fn parked(position: GeoPoint) -> Self {
        Self {
            speed_kmh: 0.0,
            rpm: IDLE_RPM,
            throttle_pct: 0.0,
            gear: 1,
            odometer_m: 0.0,
            position,
            sim_time_ms: 0,
            accel_ms2: 0.0,
        }
    }
}

pub fn gear_for(speed_kmh: f64) -> u8 {
    1 + UPSHIFT_KMH.iter().filter(|&&s| speed_kmh >= s).count() as u8
}

pub fn rpm_for(speed_kmh: f64, gear: u8) -> f64 {
    (IDLE_RPM + speed_kmh * 120.0 / f64::from(gear.max(1))).clamp(IDLE_RPM, MAX_RPM)
}

pub fn throttle_for(params: &DynamicsParams, accel_ms2: f64, speed_kmh: f64) -> f64 {
    (params.throttle_gain * accel_ms2 + params.drag_coeff * speed_kmh).clamp(0.0, 100.0)
}

/// Advances the vehicle by `dt_ms` toward the profile's current target.
pub fn step(
    state: &VehicleState,
    profile: &DriveProfile,
    params: &DynamicsParams,
    seed: u64,
    dt_ms: u64,
) -> VehicleState {
    if dt_ms == 0 {
        return *state;
    }
    let dt_s = dt_ms as f64 / 1000.0;
    let target = profile.target_at(state.sim_time_ms as f64, seed);
    let max_dv = profile.accel_limit * dt_s * 3.6;
    let speed = (state.speed_kmh + (target - state.speed_kmh).clamp(-max_dv, max_dv)).clamp(0.0, 255.0);
    let accel = (speed - state.speed_kmh) / 3.6 / dt_s;
    let gear = gear_for(speed);
    let travelled = (state.speed_kmh + speed) / 2.0 / 3.6 * dt_s;
    let odometer_m = state.odometer_m + travelled;
    VehicleState {
        speed_kmh: speed,
        rpm: rpm_for(speed, gear),
        throttle_pct: throttle_for(params, accel, speed),
        gear,
        odometer_m,
        position: profile.locate(odometer_m),
        sim_time_ms: state.sim_time_ms + dt_ms,
        accel_ms2: accel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_to(profile: &DriveProfile, ms: u64) -> Vec<VehicleState> {
        let mut s = VehicleState::parked(profile.route[0]);
        let mut out = vec![s];
        while s.sim_time_ms < ms {
            s = step(&s, profile, &DynamicsParams::default(), 0, 100);
            out.push(s);
        }
        out
    }

    #[test]
    fn idle_fixed_point() {
        let p = DriveProfile::constant(0.0, 2.0);
        let s = VehicleState::parked(p.route[0]);
        let next = step(&s, &p, &DynamicsParams::default(), 0, 100);
        assert_eq!(next.speed_kmh, 0.0);
        assert_eq!(next.rpm, 800.0);
        assert_eq!(next.throttle_pct, 0.0);
        assert_eq!(next.gear, 1);
    }

    #[test]
    fn rpm_rule() {
        // 800 + 60 * 120 / 3
        assert_eq!(rpm_for(60.0, 3), 3200.0);
        assert_eq!(rpm_for(0.0, 1), 800.0);
        assert_eq!(rpm_for(255.0, 1), 6500.0);
    }

    #[test]
    fn shift_table() {
        assert_eq!(gear_for(0.0), 1);
        assert_eq!(gear_for(19.9), 1);
        assert_eq!(gear_for(20.0), 2);
        assert_eq!(gear_for(45.0), 3);
        assert_eq!(gear_for(60.0), 4);
        assert_eq!(gear_for(130.0), 5);
    }

    #[test]
    fn ramp_time_to_target() {
        // 50 km/h = 13.89 m/s at 2 m/s² is 6.94 s; must be settled by 7 s.
        let p = DriveProfile::constant(50.0, 2.0);
        let params = DynamicsParams::default();
        let mut s = VehicleState::parked(p.route[0]);
        while s.sim_time_ms < 7_000 {
            s = step(&s, &p, &params, 0, 100);
        }
        assert!((s.speed_kmh - 50.0).abs() <= 0.5, "{}", s.speed_kmh);
    }

    #[test]
    fn speed_change_bounded_and_odometer_monotone() {
        let p = DriveProfile::aggressive();
        let states = run_to(&p, 600_000);
        let max_dv = p.accel_limit * 0.1 * 3.6 + 1e-9;
        for w in states.windows(2) {
            assert!((w[1].speed_kmh - w[0].speed_kmh).abs() <= max_dv);
            assert!(w[1].odometer_m >= w[0].odometer_m);
            assert!((800.0..=6500.0).contains(&w[1].rpm));
            assert!((0.0..=100.0).contains(&w[1].throttle_pct));
            if w[1].speed_kmh == 0.0 {
                assert_eq!(w[1].gear, 1);
                assert_eq!(w[1].rpm, IDLE_RPM);
            }
        }
    }
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("segment {0} has non-positive duration")]
    NonPositiveDuration(usize),
    #[error("segment {0} target speed outside [0, 255] km/h")]
    TargetOutOfRange(usize),
    #[error("profile has no segments")]
    Empty,
    #[error("route needs at least two points")]
    ShortRoute,
    #[error("acceleration limit must be positive")]
    BadAccelLimit,
    #[error("unknown built-in profile {0:?}")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// Great-circle distance in metres.
    pub fn distance_m(&self, other: &GeoPoint) -> f64 {
        const EARTH_RADIUS_M: f64 = 6_371_000.0;
        let (p1, p2) = (self.lat.to_radians(), other.lat.to_radians());
        let dp = p2 - p1;
        let dl = (other.lon - self.lon).to_radians();
        let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().asin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_s: f64,
    pub target_speed_kmh: f64,
}

/// Scripted drive: target speeds over time along a route.
///
/// Segments repeat cyclically when a trip outlasts the script. The route is
/// driven out and back so the position stays continuous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveProfile {
    pub name: String,
    pub segments: Vec<Segment>,
    /// m/s²
    pub accel_limit: f64,
    pub route: Vec<GeoPoint>,
    /// Fractional seeded variation applied to each segment instance's target.
    #[serde(default)]
    pub speed_jitter: f64,
}

const PATRAS_ROUTE: [GeoPoint; 6] = [
    GeoPoint::new(38.2466, 21.7346),
    GeoPoint::new(38.2520, 21.7405),
    GeoPoint::new(38.2590, 21.7450),
    GeoPoint::new(38.2650, 21.7530),
    GeoPoint::new(38.2700, 21.7620),
    GeoPoint::new(38.2801, 21.7700),
];

fn segments(spec: &[(f64, f64)]) -> Vec<Segment> {
    spec.iter()
        .map(|&(duration_s, target_speed_kmh)| Segment {
            duration_s,
            target_speed_kmh,
        })
        .collect()
}

impl DriveProfile {
    pub fn calm() -> Self {
        Self {
            name: "calm".into(),
            segments: segments(&[
                (15.0, 0.0),
                (45.0, 30.0),
                (60.0, 50.0),
                (30.0, 40.0),
                (60.0, 60.0),
                (30.0, 45.0),
                (40.0, 30.0),
                (20.0, 0.0),
            ]),
            accel_limit: 1.5,
            route: PATRAS_ROUTE.to_vec(),
            speed_jitter: 0.05,
        }
    }

    pub fn aggressive() -> Self {
        Self {
            name: "aggressive".into(),
            segments: segments(&[
                (5.0, 0.0),
                (25.0, 70.0),
                (20.0, 30.0),
                (30.0, 110.0),
                (15.0, 50.0),
                (40.0, 90.0),
                (20.0, 20.0),
                (30.0, 120.0),
                (25.0, 60.0),
                (30.0, 100.0),
                (20.0, 40.0),
                (20.0, 0.0),
            ]),
            accel_limit: 3.5,
            route: PATRAS_ROUTE.to_vec(),
            speed_jitter: 0.05,
        }
    }

    /// Single constant target, mostly for tests.
    pub fn constant(target_speed_kmh: f64, accel_limit: f64) -> Self {
        Self {
            name: "custom".into(),
            segments: segments(&[(3600.0, target_speed_kmh)]),
            accel_limit,
            route: PATRAS_ROUTE.to_vec(),
            speed_jitter: 0.0,
        }
    }

    pub fn builtin(name: &str) -> Result<Self, ProfileError> {
        match name {
            "calm" => Ok(Self::calm()),
            "aggressive" => Ok(Self::aggressive()),
            other => Err(ProfileError::Unknown(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.segments.is_empty() {
            return Err(ProfileError::Empty);
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.duration_s.is_nan() || s.duration_s <= 0.0 {
                return Err(ProfileError::NonPositiveDuration(i));
            }
            if !(0.0..=255.0).contains(&s.target_speed_kmh) {
                return Err(ProfileError::TargetOutOfRange(i));
            }
        }
        if self.route.len() < 2 {
            return Err(ProfileError::ShortRoute);
        }
        if self.accel_limit.is_nan() || self.accel_limit <= 0.0 {
            return Err(ProfileError::BadAccelLimit);
        }
        Ok(())
    }

    pub fn cycle_ms(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s * 1000.0).sum()
    }

    /// Segment index and cycle number active at `t_ms`.
    pub fn segment_at(&self, t_ms: f64) -> (usize, u64) {
        let cycle = self.cycle_ms();
        let n = (t_ms / cycle).floor().max(0.0);
        let mut rem = t_ms - n * cycle;
        for (i, s) in self.segments.iter().enumerate() {
            let d = s.duration_s * 1000.0;
            if rem < d {
                return (i, n as u64);
            }
            rem -= d;
        }
        (self.segments.len() - 1, n as u64)
    }

    /// Target speed at `t_ms`, including the seeded per-segment variation.
    pub fn target_at(&self, t_ms: f64, seed: u64) -> f64 {
        let (idx, cycle) = self.segment_at(t_ms);
        let base = self.segments[idx].target_speed_kmh;
        let j = unit_jitter(seed, cycle, idx as u64);
        (base * (1.0 + self.speed_jitter * j)).clamp(0.0, 255.0)
    }

    pub fn route_length_m(&self) -> f64 {
        self.route.windows(2).map(|w| w[0].distance_m(&w[1])).sum()
    }

    /// Position after travelling `distance_m` along the route, out and back.
    pub fn locate(&self, distance_m: f64) -> GeoPoint {
        let total = self.route_length_m();
        if total <= 0.0 {
            return self.route[0];
        }
        let mut d = distance_m.rem_euclid(2.0 * total);
        if d > total {
            d = 2.0 * total - d;
        }
        for w in self.route.windows(2) {
            let len = w[0].distance_m(&w[1]);
            if d <= len {
                let f = if len > 0.0 { d / len } else { 0.0 };
                return GeoPoint::new(
                    w[0].lat + (w[1].lat - w[0].lat) * f,
                    w[0].lon + (w[1].lon - w[0].lon) * f,
                );
            }
            d -= len;
        }
        *self.route.last().expect("validated route")
    }
}

/// Deterministic value in [-1, 1] from (seed, cycle, index) via splitmix64.
fn unit_jitter(seed: u64, cycle: u64, idx: u64) -> f64 {
    let mut z = seed
        .wrapping_add(cycle.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(idx.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        DriveProfile::calm().validate().unwrap();
        DriveProfile::aggressive().validate().unwrap();
        assert!(DriveProfile::builtin("sporty").is_err());
    }

    #[test]
    fn invalid_profiles() {
        let mut p = DriveProfile::calm();
        p.segments[2].duration_s = 0.0;
        assert_eq!(p.validate(), Err(ProfileError::NonPositiveDuration(2)));
        let mut p = DriveProfile::calm();
        p.segments[0].target_speed_kmh = 300.0;
        assert_eq!(p.validate(), Err(ProfileError::TargetOutOfRange(0)));
        let mut p = DriveProfile::calm();
        p.route.truncate(1);
        assert_eq!(p.validate(), Err(ProfileError::ShortRoute));
    }

    #[test]
    fn segments_cycle() {
        let p = DriveProfile::calm();
        assert_eq!(p.cycle_ms(), 300_000.0);
        assert_eq!(p.segment_at(0.0), (0, 0));
        assert_eq!(p.segment_at(15_000.0), (1, 0));
        assert_eq!(p.segment_at(300_000.0), (0, 1));
        assert_eq!(p.target_at(1000.0, 9), 0.0);
    }

    #[test]
    fn jitter_bounded_and_seeded() {
        let mut p = DriveProfile::constant(100.0, 2.0);
        p.speed_jitter = 0.05;
        for seed in 0..200 {
            let t = p.target_at(0.0, seed);
            assert!((95.0..=105.0).contains(&t));
            assert_eq!(t, p.target_at(10.0, seed));
        }
        assert_ne!(p.target_at(0.0, 1), p.target_at(0.0, 2));
    }

    #[test]
    fn locate_is_continuous_out_and_back() {
        let p = DriveProfile::calm();
        let len = p.route_length_m();
        assert_eq!(p.locate(0.0), p.route[0]);
        let end = p.locate(len);
        assert!(end.distance_m(p.route.last().unwrap()) < 1e-6);
        assert!(p.locate(2.0 * len).distance_m(&p.route[0]) < 1e-6);
        let mut prev = p.locate(0.0);
        let mut d = 0.0;
        while d < 3.0 * len {
            d += 10.0;
            let here = p.locate(d);
            assert!(prev.distance_m(&here) <= 10.0 + 1e-3);
            prev = here;
        }
    }
}

//! Deterministic stand-ins for the traffic and weather services.
//!
//! Responses are pure functions of (position on a 0.001° grid, time bucket,
//! seed): flow data changes per day, weather per hour.

use fogdrive_core::vehicle::GeoPoint;

use crate::types::{check_coordinates, ExternalError, FlowSegment, WeatherCondition, WeatherObservation};

pub const GRID_DEG: f64 = 0.001;
pub const DAY_MS: i64 = 86_400_000;
pub const HOUR_MS: i64 = 3_600_000;

const FREE_FLOW_KMH: [f64; 5] = [30.0, 50.0, 70.0, 90.0, 110.0];

fn quantize(lat: f64, lon: f64) -> (i64, i64) {
    ((lat / GRID_DEG).round() as i64, (lon / GRID_DEG).round() as i64)
}

/// splitmix64 over a mixed key.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic stream of uniforms in [0, 1).
struct Draws(u64);

impl Draws {
    fn new(parts: &[u64]) -> Self {
        Self(parts.iter().fold(0u64, |acc, &p| mix(acc ^ p)))
    }

    fn next(&mut self) -> f64 {
        self.0 = mix(self.0);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

/// Round to `decimals` places, landing on the float nearest the decimal.
fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

pub fn flow_segment(lat: f64, lon: f64, now_ms: i64, seed: u64) -> Result<FlowSegment, ExternalError> {
    check_coordinates(lat, lon)?;
    let (qlat, qlon) = quantize(lat, lon);
    let day = now_ms.div_euclid(DAY_MS);
    let mut d = Draws::new(&[seed, 0xF10, qlat as u64, qlon as u64, day as u64]);
    let free = FREE_FLOW_KMH[(d.next() * FREE_FLOW_KMH.len() as f64) as usize % FREE_FLOW_KMH.len()];
    let congestion = d.range(0.3, 1.0);
    let length = round_to(d.range(100.0, 1000.0), 0);
    let confidence = round_to(d.range(0.5, 1.0), 2);
    let matched = GeoPoint::new(qlat as f64 / 1000.0, qlon as f64 / 1000.0);
    Ok(FlowSegment::new(
        free,
        round_to(free * congestion, 1),
        length,
        confidence,
        matched,
    ))
}

pub fn current_weather(lat: f64, lon: f64, now_ms: i64, seed: u64) -> Result<WeatherObservation, ExternalError> {
    check_coordinates(lat, lon)?;
    let (qlat, qlon) = quantize(lat, lon);
    let hour = now_ms.div_euclid(HOUR_MS);
    let mut d = Draws::new(&[seed, 0x3EA7, qlat as u64, qlon as u64, hour as u64]);
    let condition = WeatherCondition::ALL[(d.next() * 5.0) as usize % 5];
    let hour_of_day = hour.rem_euclid(24) as f64;
    let diurnal = 4.0 * ((hour_of_day - 9.0) / 24.0 * std::f64::consts::TAU).sin();
    let mut temp = 27.0 - 0.4 * lat.abs() + diurnal + d.range(-3.0, 3.0);
    let precipitation = match condition {
        WeatherCondition::Rain => round_to(d.range(0.2, 8.0), 1),
        WeatherCondition::Snow => {
            temp = temp.min(0.5);
            round_to(d.range(0.1, 3.0), 1)
        }
        _ => 0.0,
    };
    Ok(WeatherObservation {
        temp_c: round_to(temp, 1),
        condition,
        precipitation_mm_h: precipitation,
        wind_ms: round_to(d.range(0.0, 15.0), 1),
        observed_at: hour * HOUR_MS,
    })
}

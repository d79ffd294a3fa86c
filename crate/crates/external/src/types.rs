use fogdrive_core::vehicle::GeoPoint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExternalError {
    #[error("invalid coordinates ({lat}, {lon})")]
    InvalidCoordinates { lat: f64, lon: f64 },
    #[error("rate limited; retry at {retry_at_ms}")]
    RateLimited { retry_at_ms: i64 },
    #[error("service unavailable: {0}")]
    ServiceUnavailable(String),
}

pub fn check_coordinates(lat: f64, lon: f64) -> Result<(), ExternalError> {
    if lat.is_finite() && lon.is_finite() && lat.abs() <= 90.0 && lon.abs() <= 180.0 {
        Ok(())
    } else {
        Err(ExternalError::InvalidCoordinates { lat, lon })
    }
}

/// Speeds and travel times of the road piece nearest a coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSegment {
    pub current_speed_kmh: f64,
    pub free_flow_speed_kmh: f64,
    pub current_travel_time_s: f64,
    pub free_flow_travel_time_s: f64,
    pub confidence: f64,
    pub segment_length_m: f64,
    pub matched_at: GeoPoint,
}

impl FlowSegment {
    /// Builds a segment with travel times derived from length and speed,
    /// rounded to whole seconds.
    pub fn new(
        free_flow_speed_kmh: f64,
        current_speed_kmh: f64,
        segment_length_m: f64,
        confidence: f64,
        matched_at: GeoPoint,
    ) -> Self {
        let current = current_speed_kmh.min(free_flow_speed_kmh);
        Self {
            current_speed_kmh: current,
            free_flow_speed_kmh,
            current_travel_time_s: travel_time_s(segment_length_m, current),
            free_flow_travel_time_s: travel_time_s(segment_length_m, free_flow_speed_kmh),
            confidence: confidence.clamp(0.0, 1.0),
            segment_length_m,
            matched_at,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.current_speed_kmh > self.free_flow_speed_kmh {
            v.push("current speed above free flow".to_string());
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            v.push(format!("confidence {}", self.confidence));
        }
        for (time, speed, what) in [
            (self.current_travel_time_s, self.current_speed_kmh, "current"),
            (self.free_flow_travel_time_s, self.free_flow_speed_kmh, "free-flow"),
        ] {
            if speed > 0.0 && (time - self.segment_length_m / (speed / 3.6)).abs() > 1.0 {
                v.push(format!("{what} travel time inconsistent"));
            }
        }
        v
    }
}

fn travel_time_s(length_m: f64, speed_kmh: f64) -> f64 {
    if speed_kmh > 0.0 {
        (length_m / (speed_kmh / 3.6)).round()
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherCondition {
    Clear,
    Clouds,
    Rain,
    Snow,
    Fog,
}

impl WeatherCondition {
    pub const ALL: [WeatherCondition; 5] = [
        WeatherCondition::Clear,
        WeatherCondition::Clouds,
        WeatherCondition::Rain,
        WeatherCondition::Snow,
        WeatherCondition::Fog,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            WeatherCondition::Clear => "clear",
            WeatherCondition::Clouds => "clouds",
            WeatherCondition::Rain => "rain",
            WeatherCondition::Snow => "snow",
            WeatherCondition::Fog => "fog",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherObservation {
    pub temp_c: f64,
    pub condition: WeatherCondition,
    pub precipitation_mm_h: f64,
    pub wind_ms: f64,
    pub observed_at: i64,
}

impl WeatherObservation {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match self.condition {
            WeatherCondition::Rain | WeatherCondition::Snow if self.precipitation_mm_h <= 0.0 => {
                v.push(format!("{} without precipitation", self.condition.as_str()))
            }
            WeatherCondition::Clear if self.precipitation_mm_h != 0.0 => {
                v.push("clear sky with precipitation".into())
            }
            _ => {}
        }
        if self.precipitation_mm_h < 0.0 || self.wind_ms < 0.0 {
            v.push("negative magnitude".into());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_flow_travel_time() {
        // 500 m at 50 km/h = 500 / 13.889 = 36 s
        let s = FlowSegment::new(50.0, 30.0, 500.0, 0.9, GeoPoint::new(0.0, 0.0));
        assert_eq!(s.free_flow_travel_time_s, 36.0);
        assert_eq!(s.current_travel_time_s, 60.0);
        assert!(s.violations().is_empty());
    }

    #[test]
    fn coordinates() {
        assert!(check_coordinates(90.0, -180.0).is_ok());
        assert_eq!(
            check_coordinates(91.0, 0.0),
            Err(ExternalError::InvalidCoordinates { lat: 91.0, lon: 0.0 })
        );
        assert!(check_coordinates(f64::NAN, 0.0).is_err());
        assert!(check_coordinates(0.0, 180.5).is_err());
    }

    #[test]
    fn weather_invariants() {
        let mut w = WeatherObservation {
            temp_c: 10.0,
            condition: WeatherCondition::Clear,
            precipitation_mm_h: 0.0,
            wind_ms: 2.0,
            observed_at: 0,
        };
        assert!(w.violations().is_empty());
        w.condition = WeatherCondition::Rain;
        assert_eq!(w.violations().len(), 1);
    }
}

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartSample {
    pub bpm: f64,
    /// Polar only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rr_intervals_ms: Vec<f64>,
    pub measured_at: i64,
    pub device: String,
}

impl HeartSample {
    /// Relative disagreement between the reported rate and the rate implied
    /// by the R-R intervals, if any are present.
    pub fn rr_mismatch(&self) -> Option<f64> {
        if self.rr_intervals_ms.is_empty() {
            return None;
        }
        let mean = self.rr_intervals_ms.iter().sum::<f64>() / self.rr_intervals_ms.len() as f64;
        Some((self.bpm - 60_000.0 / mean).abs() / self.bpm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RespState {
    Tension,
    Calm,
    Focus,
    Neutral,
}

impl RespState {
    /// tension > 20, calm < 12, focus in [12, 16], neutral otherwise.
    pub fn from_breaths(breaths_per_min: f64) -> Self {
        if breaths_per_min > 20.0 {
            RespState::Tension
        } else if breaths_per_min < 12.0 {
            RespState::Calm
        } else if breaths_per_min <= 16.0 {
            RespState::Focus
        } else {
            RespState::Neutral
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RespState::Tension => "tension",
            RespState::Calm => "calm",
            RespState::Focus => "focus",
            RespState::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespirationSample {
    pub breaths_per_min: f64,
    pub state: RespState,
    pub measured_at: i64,
    pub device: String,
}

/// Anything a wearable can push to the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WearableSample {
    Heart(HeartSample),
    Respiration(RespirationSample),
}

impl WearableSample {
    pub fn measured_at(&self) -> i64 {
        match self {
            WearableSample::Heart(h) => h.measured_at,
            WearableSample::Respiration(r) => r.measured_at,
        }
    }

    pub fn device(&self) -> &str {
        match self {
            WearableSample::Heart(h) => &h.device,
            WearableSample::Respiration(r) => &r.device,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn respiration_bands() {
        assert_eq!(RespState::from_breaths(4.0), RespState::Calm);
        assert_eq!(RespState::from_breaths(11.99), RespState::Calm);
        assert_eq!(RespState::from_breaths(12.0), RespState::Focus);
        assert_eq!(RespState::from_breaths(16.0), RespState::Focus);
        assert_eq!(RespState::from_breaths(16.5), RespState::Neutral);
        assert_eq!(RespState::from_breaths(20.0), RespState::Neutral);
        assert_eq!(RespState::from_breaths(20.01), RespState::Tension);
    }

    #[test]
    fn rr_mismatch() {
        let s = HeartSample {
            bpm: 75.0,
            rr_intervals_ms: vec![790.0, 810.0],
            measured_at: 0,
            device: "p".into(),
        };
        assert!(s.rr_mismatch().unwrap() < 1e-12);
    }
}

//! Threshold rules that must hold for a sustained time before alerting.

use std::collections::HashMap;

use fogdrive_core::trace::{Channel, TraceRow};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlertConfig {
    pub hr_high_bpm: f64,
    pub hr_sustain_ms: i64,
    pub stress_sustain_ms: i64,
    pub speed_limit_kmh: f64,
    pub overspeed_sustain_ms: i64,
}

impl Default for AlertConfig {
    fn default() -> Self {
        Self {
            hr_high_bpm: 120.0,
            hr_sustain_ms: 10_000,
            stress_sustain_ms: 30_000,
            speed_limit_kmh: 130.0,
            overspeed_sustain_ms: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    HrHigh,
    Stress,
    Overspeed,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::HrHigh, Rule::Stress, Rule::Overspeed];

    pub fn name(&self) -> &'static str {
        match self {
            Rule::HrHigh => "hr-high",
            Rule::Stress => "stress",
            Rule::Overspeed => "overspeed",
        }
    }

    pub fn channel(&self) -> Channel {
        match self {
            Rule::HrHigh => Channel::Bpm,
            Rule::Stress => Channel::RespState,
            Rule::Overspeed => Channel::SpeedKmh,
        }
    }

    pub fn sustain_ms(&self, cfg: &AlertConfig) -> i64 {
        match self {
            Rule::HrHigh => cfg.hr_sustain_ms,
            Rule::Stress => cfg.stress_sustain_ms,
            Rule::Overspeed => cfg.overspeed_sustain_ms,
        }
    }

    /// Whether the row is in the alerting condition.
    pub fn holds(&self, cfg: &AlertConfig, row: &TraceRow) -> bool {
        match self {
            Rule::HrHigh => row.numeric_value().is_some_and(|v| v > cfg.hr_high_bpm),
            Rule::Stress => row.scalar() == "tension",
            Rule::Overspeed => row.numeric_value().is_some_and(|v| v > cfg.speed_limit_kmh),
        }
    }

    fn for_channel(channel: Channel) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.channel() == channel)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub at: i64,
    pub rule: String,
    pub source: String,
    pub detail: String,
}

impl AlertEvent {
    pub fn to_row(&self) -> TraceRow {
        TraceRow::new(self.at, &self.source, Channel::Alert, self.rule.clone(), "")
    }
}

#[derive(Debug, Clone, Copy)]
struct Episode {
    started_at: i64,
    fired: bool,
}

/// Incremental evaluator; rows of one (source, channel) must arrive in
/// timestamp order. Interpolated rows are ignored.
#[derive(Debug, Default)]
pub struct AlertEngine {
    cfg: AlertConfig,
    open: HashMap<(String, Channel), Episode>,
}

impl AlertEngine {
    pub fn new(cfg: AlertConfig) -> Self {
        Self {
            cfg,
            open: HashMap::new(),
        }
    }

    pub fn observe(&mut self, row: &TraceRow) -> Option<AlertEvent> {
        if row.interpolated {
            return None;
        }
        let rule = Rule::for_channel(row.channel)?;
        let key = (row.source.clone(), row.channel);
        if !rule.holds(&self.cfg, row) {
            self.open.remove(&key);
            return None;
        }
        let ep = self.open.entry(key).or_insert(Episode {
            started_at: row.timestamp_ms,
            fired: false,
        });
        let held = row.timestamp_ms - ep.started_at;
        if ep.fired || held < rule.sustain_ms(&self.cfg) {
            return None;
        }
        ep.fired = true;
        Some(AlertEvent {
            at: row.timestamp_ms,
            rule: rule.name().to_string(),
            source: row.source.clone(),
            detail: format!("{} {} held {} ms", row.channel, row.scalar(), held),
        })
    }
}

/// Alerts over a sorted row set.
pub fn scan(cfg: &AlertConfig, rows: &[TraceRow]) -> Vec<AlertEvent> {
    let mut engine = AlertEngine::new(cfg.clone());
    rows.iter().filter_map(|r| engine.observe(r)).collect()
}

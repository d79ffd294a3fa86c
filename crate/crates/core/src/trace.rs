//! Per-trip trace rows, their CSV rendering, and the session manifest.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

use crate::pairing::Pairing;

pub const CSV_HEADER: &str = "timestamp_ms,source,channel,value,unit,interpolated";
pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("bad csv header {0:?}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    SpeedKmh,
    Rpm,
    ThrottlePct,
    Bpm,
    RrMs,
    BreathsPerMin,
    RespState,
    Lat,
    Lon,
    TrafficCurrentSpeed,
    TrafficFreeFlowSpeed,
    WeatherTempC,
    WeatherCondition,
    Alert,
}

impl Channel {
    pub const ALL: [Channel; 14] = [
        Channel::SpeedKmh,
        Channel::Rpm,
        Channel::ThrottlePct,
        Channel::Bpm,
        Channel::RrMs,
        Channel::BreathsPerMin,
        Channel::RespState,
        Channel::Lat,
        Channel::Lon,
        Channel::TrafficCurrentSpeed,
        Channel::TrafficFreeFlowSpeed,
        Channel::WeatherTempC,
        Channel::WeatherCondition,
        Channel::Alert,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::SpeedKmh => "speed_kmh",
            Channel::Rpm => "rpm",
            Channel::ThrottlePct => "throttle_pct",
            Channel::Bpm => "bpm",
            Channel::RrMs => "rr_ms",
            Channel::BreathsPerMin => "breaths_per_min",
            Channel::RespState => "resp_state",
            Channel::Lat => "lat",
            Channel::Lon => "lon",
            Channel::TrafficCurrentSpeed => "traffic_current_speed",
            Channel::TrafficFreeFlowSpeed => "traffic_free_flow_speed",
            Channel::WeatherTempC => "weather_temp_c",
            Channel::WeatherCondition => "weather_condition",
            Channel::Alert => "alert",
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, Channel::RespState | Channel::WeatherCondition | Channel::Alert)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown channel {s:?}"))
    }
}

/// One timestamped, source-attributed measurement.
///
/// Physiological rows may carry the device clock after the scalar as
/// `<scalar>@<device_ms>`; [`TraceRow::numeric_value`] reads the scalar part.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TraceRow {
    pub timestamp_ms: i64,
    pub source: String,
    pub channel: Channel,
    pub value: String,
    pub unit: String,
    pub interpolated: bool,
}

impl TraceRow {
    pub fn new(timestamp_ms: i64, source: &str, channel: Channel, value: String, unit: &str) -> Self {
        Self {
            timestamp_ms,
            source: source.to_string(),
            channel,
            value,
            unit: unit.to_string(),
            interpolated: false,
        }
    }

    pub fn scalar(&self) -> &str {
        self.value.split_once('@').map_or(self.value.as_str(), |(v, _)| v)
    }

    pub fn device_time(&self) -> Option<i64> {
        self.value.split_once('@').and_then(|(_, t)| t.parse().ok())
    }

    pub fn numeric_value(&self) -> Option<f64> {
        if !self.channel.is_numeric() {
            return None;
        }
        self.scalar().parse().ok().filter(|v: &f64| v.is_finite())
    }

    fn sort_key(&self) -> (i64, &str, &'static str) {
        (self.timestamp_ms, self.source.as_str(), self.channel.as_str())
    }
}

/// Formats with at most `decimals` fractional digits, trimming trailing zeros.
pub fn format_number(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Stable sort by timestamp, then source and channel name.
pub fn sort_rows(rows: &mut [TraceRow]) {
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// UTF-8, LF line endings, RFC 4180 quoting.
pub fn render_csv(rows: &[TraceRow]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        let ts = r.timestamp_ms.to_string();
        w.write_record([
            ts.as_str(),
            r.source.as_str(),
            r.channel.as_str(),
            r.value.as_str(),
            r.unit.as_str(),
            if r.interpolated { "1" } else { "0" },
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<TraceRow>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_reader(bytes);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| TraceError::Header(String::new()))?
        .map_err(|e| TraceError::Csv(e.to_string()))?;
    let joined = header.iter().collect::<Vec<_>>().join(",");
    if joined != CSV_HEADER {
        return Err(TraceError::Header(joined));
    }
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TraceError::Csv(e.to_string()))?;
        let err = |msg: String| TraceError::Row { line, msg };
        if rec.len() != 6 {
            return Err(err(format!("expected 6 fields, got {}", rec.len())));
        }
        let timestamp_ms = rec[0].parse().map_err(|_| err(format!("bad timestamp {:?}", &rec[0])))?;
        let channel = rec[2].parse().map_err(err)?;
        let interpolated = match &rec[5] {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("interpolated must be 0|1, got {other:?}"))),
        };
        rows.push(TraceRow {
            timestamp_ms,
            source: rec[1].to_string(),
            channel,
            value: rec[3].to_string(),
            unit: rec[4].to_string(),
            interpolated,
        });
    }
    Ok(rows)
}

/// Row-level invariant violations, one message per problem.
pub fn validate_rows(rows: &[TraceRow]) -> Vec<String> {
    let mut problems = Vec::new();
    for (i, w) in rows.windows(2).enumerate() {
        if w[1].timestamp_ms < w[0].timestamp_ms {
            problems.push(format!("row {}: timestamp goes backwards", i + 2));
        }
    }
    for (i, r) in rows.iter().enumerate() {
        if r.channel.is_numeric() && r.numeric_value().is_none() {
            problems.push(format!("row {}: {} value {:?} is not numeric", i + 1, r.channel, r.value));
        }
        if r.source.is_empty() {
            problems.push(format!("row {}: empty source", i + 1));
        }
        if r.interpolated && !r.channel.is_numeric() {
            problems.push(format!("row {}: non-numeric channel {} interpolated", i + 1, r.channel));
        }
    }
    problems
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-trip metadata uploaded alongside the encrypted trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: Uuid,
    pub driver_id: String,
    pub vehicle_id: String,
    pub started_at: i64,
    pub ended_at: i64,
    pub devices: Vec<Pairing>,
    pub row_count: u64,
    pub csv_sha256: String,
    pub schema_version: String,
}

impl SessionManifest {
    /// Canonical JSON encoding; also the envelope's associated data.
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("manifest serializes")
    }

    /// Checks the manifest against the plaintext CSV it describes.
    pub fn check_against(&self, csv: &[u8]) -> Vec<String> {
        let mut problems = Vec::new();
        let digest = sha256_hex(csv);
        if digest != self.csv_sha256 {
            problems.push(format!("csv sha256 {digest} != manifest {}", self.csv_sha256));
        }
        let lines = csv.iter().filter(|&&b| b == b'\n').count() as u64;
        let data_lines = lines.saturating_sub(1);
        if data_lines != self.row_count {
            problems.push(format!("csv has {data_lines} data lines, manifest says {}", self.row_count));
        }
        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!("schema version {:?}", self.schema_version));
        }
        if self.ended_at < self.started_at {
            problems.push("session ends before it starts".into());
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(ts: i64, source: &str, channel: Channel, value: &str) -> TraceRow {
        TraceRow::new(ts, source, channel, value.to_string(), "u")
    }

    #[test]
    fn header_only_for_empty_trace() {
        assert_eq!(render_csv(&[]), format!("{CSV_HEADER}\n").into_bytes());
        assert!(parse_csv(&render_csv(&[])).unwrap().is_empty());
    }

    #[test]
    fn quoting_follows_rfc4180() {
        let mut r = row(5, "gateway", Channel::Alert, "hr-high");
        r.unit = "a,\"b\"".into();
        let csv = render_csv(&[r.clone()]);
        let text = String::from_utf8(csv.clone()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "5,gateway,alert,hr-high,\"a,\"\"b\"\"\",0");
        assert_eq!(parse_csv(&csv).unwrap(), vec![r]);
    }

    #[test]
    fn ties_break_on_source_then_channel_name() {
        let mut rows = vec![
            row(1, "obd-1", Channel::SpeedKmh, "40"),
            row(1, "obd-1", Channel::Rpm, "900"),
            row(1, "gps-1", Channel::Lon, "21.7"),
            row(0, "zz", Channel::Alert, "x"),
        ];
        sort_rows(&mut rows);
        let order: Vec<_> = rows.iter().map(|r| r.channel.as_str()).collect();
        assert_eq!(order, ["alert", "lon", "rpm", "speed_kmh"]);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(parse_csv(b"a,b\n"), Err(TraceError::Header(_))));
        let bad = format!("{CSV_HEADER}\n1,s,warp_speed,1,u,0\n");
        assert!(matches!(parse_csv(bad.as_bytes()), Err(TraceError::Row { line: 2, .. })));
        let bad = format!("{CSV_HEADER}\n1,s,bpm,1,u,2\n");
        assert!(matches!(parse_csv(bad.as_bytes()), Err(TraceError::Row { .. })));
    }

    #[test]
    fn device_time_suffix() {
        let r = row(1, "polar", Channel::Bpm, "72.5@1699999999000");
        assert_eq!(r.numeric_value(), Some(72.5));
        assert_eq!(r.device_time(), Some(1_699_999_999_000));
        assert_eq!(row(1, "x", Channel::RespState, "calm").numeric_value(), None);
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(72.0, 3), "72");
        assert_eq!(format_number(71.33333, 3), "71.333");
        assert_eq!(format_number(-0.0001, 2), "0");
        assert_eq!(format_number(38.2466123, 6), "38.246612");
    }

    #[test]
    fn validation_flags_problems() {
        let rows = vec![
            row(10, "a", Channel::Bpm, "70"),
            row(5, "a", Channel::Bpm, "x"),
        ];
        let problems = validate_rows(&rows);
        assert_eq!(problems.len(), 2, "{problems:?}");
    }

    #[test]
    fn manifest_checks() {
        let rows = vec![row(1, "a", Channel::Bpm, "70"), row(2, "a", Channel::Bpm, "71")];
        let csv = render_csv(&rows);
        let mut m = SessionManifest {
            session_id: Uuid::nil(),
            driver_id: "d".into(),
            vehicle_id: "v".into(),
            started_at: 0,
            ended_at: 3,
            devices: vec![],
            row_count: 2,
            csv_sha256: sha256_hex(&csv),
            schema_version: SCHEMA_VERSION.into(),
        };
        assert!(m.check_against(&csv).is_empty());
        m.row_count = 3;
        assert_eq!(m.check_against(&csv).len(), 1);
    }

    fn arb_row() -> impl Strategy<Value = TraceRow> {
        (
            0i64..1_000_000,
            "[a-z]{1,6}(-[0-9])?",
            prop::sample::select(Channel::ALL.to_vec()),
            "[ -~]{0,12}",
            "[ -~]{0,4}",
            any::<bool>(),
        )
            .prop_map(|(timestamp_ms, source, channel, value, unit, interpolated)| TraceRow {
                timestamp_ms,
                source,
                channel,
                value,
                unit,
                interpolated,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(arb_row(), 0..60)) {
            let parsed = parse_csv(&render_csv(&rows)).unwrap();
            prop_assert_eq!(parsed, rows);
        }

        #[test]
        fn sort_is_interleaving_invariant(mut rows in prop::collection::vec(arb_row(), 0..60), seed in any::<u64>()) {
            // Shuffling whole sources preserves each source's internal order,
            // which is what interleaved producers guarantee.
            let mut a = rows.clone();
            sort_rows(&mut a);
            let mut keyed: Vec<(u64, TraceRow)> = rows
                .drain(..)
                .map(|r| (seed.wrapping_mul(r.source.len() as u64 + 1) % 7, r))
                .collect();
            keyed.sort_by_key(|(k, _)| *k);
            let mut b: Vec<TraceRow> = keyed.into_iter().map(|(_, r)| r).collect();
            sort_rows(&mut b);
            prop_assert_eq!(a, b);
        }
    }
}

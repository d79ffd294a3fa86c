//! Fan-out of source records into trace rows.

use fogdrive_core::obd::PidValue;
use fogdrive_core::trace::{format_number, Channel, TraceRow};
use fogdrive_core::vehicle::GeoPoint;
use fogdrive_core::wearable::WearableSample;
use fogdrive_external::{FlowSegment, WeatherObservation};

pub const TRAFFIC_SOURCE: &str = "traffic";
pub const WEATHER_SOURCE: &str = "weather";

/// Anything a producer can hand to the gateway.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Obd { source: String, value: PidValue },
    Wearable(WearableSample),
    Gps { source: String, fix: GeoPoint },
    Flow { source: String, segment: FlowSegment },
    Weather { source: String, observation: WeatherObservation },
}

impl Sample {
    pub fn source(&self) -> &str {
        match self {
            Sample::Obd { source, .. }
            | Sample::Gps { source, .. }
            | Sample::Flow { source, .. }
            | Sample::Weather { source, .. } => source,
            Sample::Wearable(w) => w.device(),
        }
    }
}

fn stamped(v: f64, decimals: usize, device_ms: i64) -> String {
    format!("{}@{device_ms}", format_number(v, decimals))
}

/// Rows for one sample, all stamped with the gateway arrival time.
pub fn to_rows(sample: &Sample, arrival_ms: i64) -> Vec<TraceRow> {
    let row = |source: &str, channel, value: String, unit: &str| TraceRow::new(arrival_ms, source, channel, value, unit);
    match sample {
        Sample::Obd { source, value } => match value {
            PidValue::Rpm(v) => vec![row(source, Channel::Rpm, format_number(*v, 2), "rpm")],
            PidValue::SpeedKmh(v) => vec![row(source, Channel::SpeedKmh, format_number(*v, 0), "km/h")],
            PidValue::ThrottlePct(v) => vec![row(source, Channel::ThrottlePct, format_number(*v, 2), "%")],
            PidValue::Raw(_) => Vec::new(),
        },
        Sample::Wearable(WearableSample::Heart(h)) => {
            let mut rows = vec![row(&h.device, Channel::Bpm, stamped(h.bpm, 1, h.measured_at), "bpm")];
            rows.extend(
                h.rr_intervals_ms
                    .iter()
                    .map(|rr| row(&h.device, Channel::RrMs, stamped(*rr, 1, h.measured_at), "ms")),
            );
            rows
        }
        Sample::Wearable(WearableSample::Respiration(r)) => vec![
            row(
                &r.device,
                Channel::BreathsPerMin,
                stamped(r.breaths_per_min, 1, r.measured_at),
                "breaths/min",
            ),
            row(
                &r.device,
                Channel::RespState,
                format!("{}@{}", r.state.as_str(), r.measured_at),
                "",
            ),
        ],
        Sample::Gps { source, fix } => vec![
            row(source, Channel::Lat, format_number(fix.lat, 6), "deg"),
            row(source, Channel::Lon, format_number(fix.lon, 6), "deg"),
        ],
        Sample::Flow { source, segment } => vec![
            row(
                source,
                Channel::TrafficCurrentSpeed,
                format_number(segment.current_speed_kmh, 1),
                "km/h",
            ),
            row(
                source,
                Channel::TrafficFreeFlowSpeed,
                format_number(segment.free_flow_speed_kmh, 1),
                "km/h",
            ),
        ],
        Sample::Weather { source, observation } => vec![
            row(source, Channel::WeatherTempC, format_number(observation.temp_c, 1), "C"),
            row(source, Channel::WeatherCondition, observation.condition.as_str().to_string(), ""),
        ],
    }
}

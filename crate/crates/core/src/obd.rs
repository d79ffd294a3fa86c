//! OBD-II request/response codec using an ELM327-style ASCII hex framing.
//!
//! Requests are `MM PP\r`; positive replies are `RR PP D1 [D2 ..]\r` where
//! `RR = MM + 0x40`. Negative replies are `7F MM NRC\r`. A trailing `>`
//! prompt after the CR is accepted and ignored.

use std::fmt;

use thiserror::Error;

/// Mode 0x01: show current data.
pub const MODE_CURRENT_DATA: u8 = 0x01;
/// Offset added to the request mode in a positive reply.
pub const POSITIVE_REPLY_OFFSET: u8 = 0x40;
/// First byte of a negative reply.
pub const NEGATIVE_REPLY: u8 = 0x7F;
/// Negative response code for an unsupported sub-function (PID).
pub const NRC_SUB_FUNCTION_NOT_SUPPORTED: u8 = 0x12;

pub const PID_ENGINE_RPM: u8 = 0x0C;
pub const PID_VEHICLE_SPEED: u8 = 0x0D;
pub const PID_THROTTLE_POSITION: u8 = 0x11;

/// The three PIDs the gateway polls, in round-robin order.
pub const CORE_PIDS: [PidId; 3] = [
    PidId::current(PID_ENGINE_RPM),
    PidId::current(PID_VEHICLE_SPEED),
    PidId::current(PID_THROTTLE_POSITION),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObdError {
    #[error("unsupported mode 0x{0:02X}")]
    UnsupportedMode(u8),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("pid mismatch: expected 0x{expected:02X}, got 0x{actual:02X}")]
    PidMismatch { expected: u8, actual: u8 },
    #[error("wrong data length for pid 0x{pid:02X}: expected {expected}, got {actual}")]
    WrongLength { pid: u8, expected: usize, actual: usize },
    #[error("value {value} {unit} outside physical range")]
    RangeViolation { value: f64, unit: &'static str },
    #[error("negative response to mode 0x{mode:02X} (code 0x{code:02X})")]
    NegativeResponse { mode: u8, code: u8 },
}

/// Mode + PID pair addressing one vehicle parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PidId {
    pub mode: u8,
    pub pid: u8,
}

impl PidId {
    pub const fn current(pid: u8) -> Self {
        Self {
            mode: MODE_CURRENT_DATA,
            pid,
        }
    }

    /// Number of data bytes in a reply, if the PID is in the table.
    pub fn data_len(&self) -> Option<usize> {
        match self.pid {
            PID_ENGINE_RPM => Some(2),
            PID_VEHICLE_SPEED | PID_THROTTLE_POSITION => Some(1),
            _ => None,
        }
    }

    pub fn is_core(&self) -> bool {
        self.mode == MODE_CURRENT_DATA && self.data_len().is_some()
    }
}

impl fmt::Display for PidId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02X} {:02X}", self.mode, self.pid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObdRequest {
    pub pid_id: PidId,
    /// Monotonic issue time in milliseconds.
    pub issued_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Rpm,
    Kmh,
    Percent,
    Raw,
}

impl Unit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Rpm => "rpm",
            Unit::Kmh => "km/h",
            Unit::Percent => "%",
            Unit::Raw => "raw",
        }
    }
}

/// Decoded engineering value of a PID reply.
#[derive(Debug, Clone, PartialEq)]
pub enum PidValue {
    Rpm(f64),
    SpeedKmh(f64),
    ThrottlePct(f64),
    /// Unknown PID: payload passed through undecoded.
    Raw(Vec<u8>),
}

impl PidValue {
    pub fn unit(&self) -> Unit {
        match self {
            PidValue::Rpm(_) => Unit::Rpm,
            PidValue::SpeedKmh(_) => Unit::Kmh,
            PidValue::ThrottlePct(_) => Unit::Percent,
            PidValue::Raw(_) => Unit::Raw,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            PidValue::Rpm(v) | PidValue::SpeedKmh(v) | PidValue::ThrottlePct(v) => Some(v),
            PidValue::Raw(_) => None,
        }
    }

    fn check_range(&self) -> Result<(), ObdError> {
        let ok = match *self {
            PidValue::Rpm(v) => v >= 0.0,
            PidValue::SpeedKmh(v) => (0.0..=255.0).contains(&v),
            PidValue::ThrottlePct(v) => (0.0..=100.0).contains(&v),
            PidValue::Raw(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(ObdError::RangeViolation {
                value: self.as_f64().unwrap_or(f64::NAN),
                unit: self.unit().as_str(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObdResponse {
    pub pid_id: PidId,
    pub data: Vec<u8>,
    pub value: PidValue,
    /// Monotonic receive time in milliseconds.
    pub received_at: f64,
}

/// Frames a request as `MM PP\r`.
pub fn encode_request(pid_id: PidId) -> Result<Vec<u8>, ObdError> {
    if pid_id.mode != MODE_CURRENT_DATA {
        return Err(ObdError::UnsupportedMode(pid_id.mode));
    }
    Ok(format!("{:02X} {:02X}\r", pid_id.mode, pid_id.pid).into_bytes())
}

/// Parses a request frame as received by the ECU side.
pub fn parse_request(line: &[u8]) -> Result<PidId, ObdError> {
    let bytes = hex_tokens(line)?;
    match bytes.as_slice() {
        [mode, pid] if *mode == MODE_CURRENT_DATA => Ok(PidId::current(*pid)),
        [mode, _] => Err(ObdError::UnsupportedMode(*mode)),
        _ => Err(ObdError::MalformedFrame(format!(
            "request needs 2 bytes, got {}",
            bytes.len()
        ))),
    }
}

/// Renders a positive reply frame `RR PP D1 [D2]\r`.
pub fn encode_response(pid_id: PidId, data: &[u8]) -> Vec<u8> {
    let mut out = format!(
        "{:02X} {:02X}",
        pid_id.mode.wrapping_add(POSITIVE_REPLY_OFFSET),
        pid_id.pid
    );
    for b in data {
        out.push_str(&format!(" {b:02X}"));
    }
    out.push('\r');
    out.into_bytes()
}

/// Renders a negative reply frame `7F MM NRC\r`.
pub fn encode_negative_response(mode: u8, code: u8) -> Vec<u8> {
    format!("{NEGATIVE_REPLY:02X} {mode:02X} {code:02X}\r").into_bytes()
}

/// Parses a reply line and decodes its payload.
///
/// `received_at` on the result is zero; transports stamp it.
pub fn parse_response(line: &[u8], expected: PidId) -> Result<ObdResponse, ObdError> {
    let bytes = hex_tokens(line)?;
    if bytes.first() == Some(&NEGATIVE_REPLY) {
        return match bytes.as_slice() {
            [_, mode, code] => Err(ObdError::NegativeResponse {
                mode: *mode,
                code: *code,
            }),
            _ => Err(ObdError::MalformedFrame("short negative reply".into())),
        };
    }
    if bytes.len() < 3 {
        return Err(ObdError::MalformedFrame(format!(
            "reply needs at least 3 bytes, got {}",
            bytes.len()
        )));
    }
    let want_mode = expected.mode.wrapping_add(POSITIVE_REPLY_OFFSET);
    if bytes[0] != want_mode {
        return Err(ObdError::MalformedFrame(format!(
            "mode echo 0x{:02X}, expected 0x{want_mode:02X}",
            bytes[0]
        )));
    }
    if bytes[1] != expected.pid {
        return Err(ObdError::PidMismatch {
            expected: expected.pid,
            actual: bytes[1],
        });
    }
    let data = bytes[2..].to_vec();
    if let Some(len) = expected.data_len() {
        if data.len() != len {
            return Err(ObdError::MalformedFrame(format!(
                "pid 0x{:02X} carries {len} data bytes, got {}",
                expected.pid,
                data.len()
            )));
        }
    }
    let value = decode_pid(expected, &data)?;
    value.check_range()?;
    Ok(ObdResponse {
        pid_id: expected,
        data,
        value,
        received_at: 0.0,
    })
}

/// Standard OBD-II scaling for the supported PIDs.
pub fn decode_pid(pid_id: PidId, data: &[u8]) -> Result<PidValue, ObdError> {
    if let Some(expected) = pid_id.data_len() {
        if data.len() != expected {
            return Err(ObdError::WrongLength {
                pid: pid_id.pid,
                expected,
                actual: data.len(),
            });
        }
    }
    Ok(match pid_id.pid {
        PID_ENGINE_RPM => PidValue::Rpm((256.0 * f64::from(data[0]) + f64::from(data[1])) / 4.0),
        PID_VEHICLE_SPEED => PidValue::SpeedKmh(f64::from(data[0])),
        PID_THROTTLE_POSITION => PidValue::ThrottlePct(f64::from(data[0]) * 100.0 / 255.0),
        _ => PidValue::Raw(data.to_vec()),
    })
}

/// Inverse scaling used by the ECU side. Values are clamped and rounded to the
/// nearest representable payload.
pub fn encode_value(pid_id: PidId, value: f64) -> Option<Vec<u8>> {
    match pid_id.pid {
        PID_ENGINE_RPM => {
            let raw = (value * 4.0).round().clamp(0.0, 65535.0) as u16;
            Some(raw.to_be_bytes().to_vec())
        }
        PID_VEHICLE_SPEED => Some(vec![value.round().clamp(0.0, 255.0) as u8]),
        PID_THROTTLE_POSITION => Some(vec![(value * 255.0 / 100.0).round().clamp(0.0, 255.0) as u8]),
        _ => None,
    }
}

fn hex_tokens(line: &[u8]) -> Result<Vec<u8>, ObdError> {
    let text = std::str::from_utf8(line)
        .map_err(|_| ObdError::MalformedFrame("non-ASCII frame".into()))?;
    let text = text.strip_suffix('>').unwrap_or(text);
    let body = text
        .strip_suffix('\r')
        .ok_or_else(|| ObdError::MalformedFrame("missing CR terminator".into()))?;
    if body.is_empty() {
        return Err(ObdError::MalformedFrame("empty frame".into()));
    }
    body.split(' ')
        .map(|tok| {
            if tok.len() != 2 {
                return Err(ObdError::MalformedFrame(format!("bad token {tok:?}")));
            }
            u8::from_str_radix(tok, 16)
                .map_err(|_| ObdError::MalformedFrame(format!("non-hex token {tok:?}")))
        })
        .collect()
}

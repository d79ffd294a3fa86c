//! Data sources and shared types for the driving-behaviour fog pipeline.
//!
//! - [`obd`]: OBD-II PID framing and decoding.
//! - [`vehicle`]: kinematic vehicle simulator and latency-shaped ECU.
//! - [`wearable`]: heart-rate and respiration wearables.
//! - [`pairing`]: device bonding and locks.
//! - [`trace`]: trip trace rows, CSV format and session manifest.

pub mod clock;
pub mod obd;
pub mod pairing;
pub mod trace;
pub mod vehicle;
pub mod wearable;

pub use clock::{Clock, ManualClock, SystemClock, TokioClock};

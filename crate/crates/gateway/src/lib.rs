//! Fog gateway: pairs devices, aggregates samples into a trip trace, raises
//! alerts, fills short gaps, seals the trace and ships it to the cloud store.

pub mod alerts;
pub mod envelope;
pub mod finalize;
pub mod gapfill;
pub mod obd;
pub mod outbox;
pub mod producers;
pub mod rows;
pub mod session;
pub mod trip;

pub use alerts::{scan, AlertConfig, AlertEngine, AlertEvent, Rule};
pub use envelope::{open, seal, EnvelopeError, TraceKey};
pub use finalize::{finalize_and_upload, Delivery, FinalizeError, Finalized};
pub use gapfill::{fill_gaps, fill_series, NominalPeriods};
pub use obd::{run_obd_loop, EcuConnector, ObdConnector, ObdLoopConfig, ObdStats, TcpConnector};
pub use outbox::{flush, upload_with_retry, CloudTarget, FlushReport, Outbox, RetryPolicy, UploadError};
pub use rows::{to_rows, Sample};
pub use session::{
    default_period, finalize_rows, EraseReport, EraseScope, Gateway, GatewayConfig, GatewayError, IngestError, SessionHandle,
    SessionOutput,
};
pub use trip::{ObdTransport, TripConfig, TripError, TripRig};

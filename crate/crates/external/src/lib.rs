//! Traffic-flow and weather context: typed records, deterministic stub
//! services (in-process and HTTP), clients and a per-service call quota.

pub mod limiter;
pub mod provider;
pub mod server;
pub mod stub;
pub mod types;

pub use limiter::{RateLimiter, SlidingWindow};
pub use provider::{ContextProvider, HttpProvider, LimitPolicy, RateLimited, StubProvider};
pub use types::{ExternalError, FlowSegment, WeatherCondition, WeatherObservation};

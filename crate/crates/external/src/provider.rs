use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use fogdrive_core::Clock;
use serde::Deserialize;

use crate::limiter::{RateLimiter, SlidingWindow};
use crate::stub;
use crate::types::{check_coordinates, ExternalError, FlowSegment, WeatherObservation};

#[async_trait]
pub trait ContextProvider: Send + Sync {
    async fn flow_segment(&self, lat: f64, lon: f64) -> Result<FlowSegment, ExternalError>;
    async fn current_weather(&self, lat: f64, lon: f64) -> Result<WeatherObservation, ExternalError>;
}

#[async_trait]
impl<P: ContextProvider + ?Sized> ContextProvider for Arc<P> {
    async fn flow_segment(&self, lat: f64, lon: f64) -> Result<FlowSegment, ExternalError> {
        (**self).flow_segment(lat, lon).await
    }

    async fn current_weather(&self, lat: f64, lon: f64) -> Result<WeatherObservation, ExternalError> {
        (**self).current_weather(lat, lon).await
    }
}

/// Stub services answered in-process, without HTTP.
pub struct StubProvider {
    seed: u64,
    clock: Arc<dyn Clock>,
    available: Arc<AtomicBool>,
}

impl StubProvider {
    pub fn new(seed: u64, clock: Arc<dyn Clock>) -> Self {
        Self {
            seed,
            clock,
            available: Arc::new(AtomicBool::new(true)),
        }
    }

    /// Shared switch to simulate an outage.
    pub fn availability(&self) -> Arc<AtomicBool> {
        self.available.clone()
    }

    fn check_up(&self) -> Result<(), ExternalError> {
        if self.available.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(ExternalError::ServiceUnavailable("stub offline".into()))
        }
    }
}

#[async_trait]
impl ContextProvider for StubProvider {
    async fn flow_segment(&self, lat: f64, lon: f64) -> Result<FlowSegment, ExternalError> {
        self.check_up()?;
        stub::flow_segment(lat, lon, self.clock.now_ms(), self.seed)
    }

    async fn current_weather(&self, lat: f64, lon: f64) -> Result<WeatherObservation, ExternalError> {
        self.check_up()?;
        stub::current_weather(lat, lon, self.clock.now_ms(), self.seed)
    }
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    detail: String,
}

/// Client for the stub HTTP endpoints (`GET /flow`, `GET /weather`).
#[derive(Clone)]
pub struct HttpProvider {
    base_url: String,
    client: reqwest::Client,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(5))
            .build()
            .expect("http client");
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
        }
    }

    async fn get<T: serde::de::DeserializeOwned>(&self, path: &str, lat: f64, lon: f64) -> Result<T, ExternalError> {
        check_coordinates(lat, lon)?;
        let resp = self
            .client
            .get(format!("{}{}", self.base_url, path))
            .query(&[("lat", lat), ("lon", lon)])
            .send()
            .await
            .map_err(|e| ExternalError::ServiceUnavailable(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            return resp
                .json()
                .await
                .map_err(|e| ExternalError::ServiceUnavailable(format!("bad body: {e}")));
        }
        let body: Option<ErrorBody> = resp.json().await.ok();
        match (status.as_u16(), body) {
            (400, Some(b)) if b.error == "invalid-coordinates" => Err(ExternalError::InvalidCoordinates { lat, lon }),
            (_, Some(b)) => Err(ExternalError::ServiceUnavailable(format!("{status}: {} {}", b.error, b.detail))),
            (_, None) => Err(ExternalError::ServiceUnavailable(status.to_string())),
        }
    }
}

#[async_trait]
impl ContextProvider for HttpProvider {
    async fn flow_segment(&self, lat: f64, lon: f64) -> Result<FlowSegment, ExternalError> {
        self.get("/flow", lat, lon).await
    }

    async fn current_weather(&self, lat: f64, lon: f64) -> Result<WeatherObservation, ExternalError> {
        self.get("/weather", lat, lon).await
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitPolicy {
    /// Fail immediately with `RateLimited`.
    #[default]
    Reject,
    /// Sleep until the window frees a permit.
    Defer,
}

/// Wraps a provider with one sliding-window limiter per service.
pub struct RateLimited<P> {
    inner: P,
    flow: RateLimiter,
    weather: RateLimiter,
    policy: LimitPolicy,
}

impl<P: ContextProvider> RateLimited<P> {
    pub fn new(inner: P, per_minute: usize, policy: LimitPolicy, clock: Arc<dyn Clock>) -> Self {
        Self {
            inner,
            flow: RateLimiter::new(SlidingWindow::per_minute(per_minute), clock.clone()),
            weather: RateLimiter::new(SlidingWindow::per_minute(per_minute), clock),
            policy,
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    async fn permit(&self, limiter: &RateLimiter) -> Result<(), ExternalError> {
        loop {
            match limiter.acquire() {
                Ok(_) => return Ok(()),
                Err(retry_at_ms) => match self.policy {
                    LimitPolicy::Reject => return Err(ExternalError::RateLimited { retry_at_ms }),
                    LimitPolicy::Defer => {
                        let wait = (retry_at_ms - limiter.now_ms()).max(1) as u64;
                        tokio::time::sleep(Duration::from_millis(wait)).await;
                    }
                },
            }
        }
    }
}

#[async_trait]
impl<P: ContextProvider> ContextProvider for RateLimited<P> {
    async fn flow_segment(&self, lat: f64, lon: f64) -> Result<FlowSegment, ExternalError> {
        check_coordinates(lat, lon)?;
        self.permit(&self.flow).await?;
        self.inner.flow_segment(lat, lon).await
    }

    async fn current_weather(&self, lat: f64, lon: f64) -> Result<WeatherObservation, ExternalError> {
        check_coordinates(lat, lon)?;
        self.permit(&self.weather).await?;
        self.inner.current_weather(lat, lon).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fogdrive_core::{ManualClock, TokioClock};

    #[tokio::test]
    async fn sixty_first_call_rejected() {
        let clock = Arc::new(ManualClock::new(1_700_000_000_000));
        let p = RateLimited::new(StubProvider::new(1, clock.clone()), 60, LimitPolicy::Reject, clock.clone());
        for _ in 0..60 {
            p.current_weather(38.25, 21.74).await.unwrap();
            clock.advance(900);
        }
        let err = p.current_weather(38.25, 21.74).await.unwrap_err();
        assert_eq!(
            err,
            ExternalError::RateLimited {
                retry_at_ms: 1_700_000_000_000 + 60_000
            }
        );
        // Flow has its own quota.
        assert!(p.flow_segment(38.25, 21.74).await.is_ok());
    }

    #[tokio::test(start_paused = true)]
    async fn defer_waits_for_window() {
        let clock: Arc<dyn Clock> = Arc::new(TokioClock::new(0));
        let p = RateLimited::new(StubProvider::new(1, clock.clone()), 60, LimitPolicy::Defer, clock.clone());
        for _ in 0..61 {
            p.current_weather(0.0, 0.0).await.unwrap();
        }
        assert_eq!(clock.now_ms(), 60_000);
    }

    #[tokio::test]
    async fn outage() {
        let clock = Arc::new(ManualClock::new(0));
        let p = StubProvider::new(1, clock);
        p.availability().store(false, Ordering::SeqCst);
        assert!(matches!(
            p.flow_segment(0.0, 0.0).await,
            Err(ExternalError::ServiceUnavailable(_))
        ));
    }
}

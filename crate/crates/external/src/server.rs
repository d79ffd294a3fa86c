//! HTTP face of the stub services.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use fogdrive_core::Clock;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::stub;
use crate::types::ExternalError;

#[derive(Clone)]
pub struct StubState {
    pub seed: u64,
    pub clock: Arc<dyn Clock>,
    pub available: Arc<AtomicBool>,
}

impl StubState {
    pub fn new(seed: u64, clock: Arc<dyn Clock>) -> Self {
        Self {
            seed,
            clock,
            available: Arc::new(AtomicBool::new(true)),
        }
    }
}

#[derive(Deserialize)]
struct Coords {
    lat: f64,
    lon: f64,
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    detail: String,
}

fn error_response(e: ExternalError) -> Response {
    let (status, code) = match e {
        ExternalError::InvalidCoordinates { .. } => (StatusCode::BAD_REQUEST, "invalid-coordinates"),
        ExternalError::RateLimited { .. } => (StatusCode::TOO_MANY_REQUESTS, "rate-limited"),
        ExternalError::ServiceUnavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "service-unavailable"),
    };
    (status, Json(ErrorBody { error: code, detail: e.to_string() })).into_response()
}

fn respond<T: Serialize>(state: &StubState, f: impl FnOnce(i64, u64) -> Result<T, ExternalError>) -> Response {
    if !state.available.load(Ordering::SeqCst) {
        return error_response(ExternalError::ServiceUnavailable("stub offline".into()));
    }
    match f(state.clock.now_ms(), state.seed) {
        Ok(v) => Json(v).into_response(),
        Err(e) => error_response(e),
    }
}

async fn flow(State(state): State<StubState>, Query(c): Query<Coords>) -> Response {
    respond(&state, |now, seed| stub::flow_segment(c.lat, c.lon, now, seed))
}

async fn weather(State(state): State<StubState>, Query(c): Query<Coords>) -> Response {
    respond(&state, |now, seed| stub::current_weather(c.lat, c.lon, now, seed))
}

pub fn router(state: StubState) -> Router {
    Router::new()
        .route("/flow", get(flow))
        .route("/weather", get(weather))
        .with_state(state)
}

/// Binds and serves in a background task; returns the bound address.
pub async fn spawn(state: StubState, addr: SocketAddr) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router(state)).await {
            tracing::error!("context stub server stopped: {e}");
        }
    });
    Ok((local, handle))
}

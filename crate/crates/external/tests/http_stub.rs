use std::sync::atomic::Ordering;
use std::sync::Arc;

use fogdrive_core::{Clock, ManualClock};
use fogdrive_external::server::{spawn, StubState};
use fogdrive_external::{stub, ContextProvider, ExternalError, HttpProvider};

const T0: i64 = 1_700_000_000_000;

async fn start(seed: u64) -> (HttpProvider, StubState) {
    let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(T0));
    let state = StubState::new(seed, clock);
    let (addr, _) = spawn(state.clone(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
    (HttpProvider::new(format!("http://{addr}")), state)
}

#[tokio::test]
async fn http_matches_in_process_stub() {
    let (client, _state) = start(7).await;
    let flow = client.flow_segment(38.2466, 21.7346).await.unwrap();
    assert_eq!(flow, stub::flow_segment(38.2466, 21.7346, T0, 7).unwrap());
    let weather = client.current_weather(38.2466, 21.7346).await.unwrap();
    assert_eq!(weather, stub::current_weather(38.2466, 21.7346, T0, 7).unwrap());
}

#[tokio::test]
async fn invalid_coordinates_and_outage() {
    let (client, state) = start(7).await;
    assert!(matches!(
        client.flow_segment(91.0, 0.0).await,
        Err(ExternalError::InvalidCoordinates { .. })
    ));
    state.available.store(false, Ordering::SeqCst);
    assert!(matches!(
        client.current_weather(0.0, 0.0).await,
        Err(ExternalError::ServiceUnavailable(_))
    ));
}

#[tokio::test]
async fn unreachable_is_unavailable() {
    let client = HttpProvider::new("http://127.0.0.1:9");
    assert!(matches!(
        client.flow_segment(0.0, 0.0).await,
        Err(ExternalError::ServiceUnavailable(_))
    ));
}

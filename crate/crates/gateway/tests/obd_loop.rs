use std::sync::Arc;
use std::time::Duration;

use fogdrive_core::pairing::{DeviceKind, SimpleDevice};
use fogdrive_core::trace::parse_csv;
use fogdrive_core::vehicle::{DriveProfile, Ecu, LatencyModel, SimConfig};
use fogdrive_core::TokioClock;
use fogdrive_gateway::{run_obd_loop, EcuConnector, Gateway, GatewayConfig, ObdLoopConfig, ObdStats};

struct Bench {
    gateway: Arc<Gateway>,
    link: Arc<EcuConnector>,
    stats: Arc<ObdStats>,
}

fn bench(latency: LatencyModel, seed: u64) -> Bench {
    let clock = TokioClock::new(1_700_000_000_000);
    let ecu = Arc::new(
        Ecu::new(
            DriveProfile::calm(),
            &SimConfig {
                seed,
                latency,
                ..SimConfig::default()
            },
        )
        .unwrap(),
    );
    let gateway = Arc::new(Gateway::new(
        GatewayConfig {
            data_dir: std::env::temp_dir(),
            ..GatewayConfig::default()
        },
        Arc::new(clock),
    ));
    gateway.pair(Arc::new(SimpleDevice::new("obd-1", DeviceKind::Obd))).unwrap();
    Bench {
        gateway,
        link: Arc::new(EcuConnector::new(ecu, clock)),
        stats: Arc::new(ObdStats::default()),
    }
}

/// OBD rows per minute over a `secs` session.
async fn rate(latency: LatencyModel, secs: u64) -> f64 {
    let b = bench(latency, 11);
    let h = b.gateway.start_session("d", "v").await.unwrap();
    let task = tokio::spawn(run_obd_loop(
        b.gateway.clone(),
        "obd-1".into(),
        b.link.clone(),
        ObdLoopConfig::default(),
        b.stats.clone(),
    ));
    tokio::time::sleep(Duration::from_secs(secs)).await;
    task.abort();
    let out = b.gateway.end_session(&h).await.unwrap();
    let rows = parse_csv(&out.csv).unwrap();
    let n = rows.iter().filter(|r| r.source == "obd-1" && !r.interpolated).count();
    assert_eq!(n as u64, b.stats.replies());
    n as f64 * 60.0 / secs as f64
}

#[tokio::test(start_paused = true)]
async fn default_latency_rate() {
    let per_min = rate(LatencyModel::default(), 60).await;
    assert!((per_min - 545.0).abs() <= 545.0 * 0.05, "{per_min}");
}

#[tokio::test(start_paused = true)]
async fn fixed_latency_bounds() {
    let slow = rate(LatencyModel::Fixed { ms: 200.0 }, 60).await;
    assert!((slow - 300.0).abs() <= 300.0 * 0.02, "{slow}");
    let fast = rate(LatencyModel::Fixed { ms: 50.0 }, 60).await;
    assert!((fast - 1200.0).abs() <= 1200.0 * 0.02, "{fast}");
}

#[tokio::test(start_paused = true)]
async fn reconnects_with_backoff_after_link_loss() {
    let b = bench(LatencyModel::Fixed { ms: 100.0 }, 3);
    let h = b.gateway.start_session("d", "v").await.unwrap();
    let t0 = b.gateway.now_ms();
    let task = tokio::spawn(run_obd_loop(
        b.gateway.clone(),
        "obd-1".into(),
        b.link.clone(),
        ObdLoopConfig::default(),
        b.stats.clone(),
    ));
    tokio::time::sleep(Duration::from_millis(20_050)).await;
    b.link.set_online(false);
    b.link.sever();
    tokio::time::sleep(Duration::from_millis(3_000)).await;
    b.link.set_online(true);
    tokio::time::sleep(Duration::from_millis(10_000)).await;
    task.abort();
    let out = b.gateway.end_session(&h).await.unwrap();

    assert_eq!(*b.stats.backoffs_ms.lock().unwrap(), vec![500, 1_000, 2_000]);
    assert_eq!(b.stats.connects.load(std::sync::atomic::Ordering::SeqCst), 2);
    let gaps = b.stats.gaps.lock().unwrap().clone();
    assert_eq!(gaps.len(), 1);
    let (lost, restored) = gaps[0];
    assert!((lost - t0 - 20_050).abs() <= 100, "{lost}");
    assert_eq!(restored - lost, 3_500);

    let rows = parse_csv(&out.csv).unwrap();
    let obd: Vec<i64> = rows
        .iter()
        .filter(|r| r.source == "obd-1" && !r.interpolated)
        .map(|r| r.timestamp_ms)
        .collect();
    assert!(obd.iter().any(|&t| t > restored), "rows resume after reconnect");
    assert!(!obd.iter().any(|&t| t > lost + 1 && t < restored));
    // ~200 replies before the cut and ~95 after it.
    assert!((obd.len() as i64 - 295).abs() <= 5, "{}", obd.len());
}

#[tokio::test(start_paused = true)]
async fn backoff_caps_at_limit() {
    let b = bench(LatencyModel::Fixed { ms: 100.0 }, 3);
    b.link.set_online(false);
    let h = b.gateway.start_session("d", "v").await.unwrap();
    let task = tokio::spawn(run_obd_loop(
        b.gateway.clone(),
        "obd-1".into(),
        b.link.clone(),
        ObdLoopConfig::default(),
        b.stats.clone(),
    ));
    tokio::time::sleep(Duration::from_secs(120)).await;
    task.abort();
    b.gateway.end_session(&h).await.unwrap();
    let waits = b.stats.backoffs_ms.lock().unwrap().clone();
    assert_eq!(&waits[..8], &[500, 1_000, 2_000, 4_000, 8_000, 16_000, 30_000, 30_000]);
}

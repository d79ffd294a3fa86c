use std::net::SocketAddr;
use std::sync::Arc;

use fogdrive_cloud::{spawn, ClientEntry, CloudClient, CloudConfig, Scope};
use fogdrive_core::pairing::{DeviceKind, SimpleDevice};
use fogdrive_core::trace::sha256_hex;
use fogdrive_core::vehicle::GeoPoint;
use fogdrive_core::{ManualClock, SystemClock};
use fogdrive_gateway::envelope::MAGIC;
use fogdrive_gateway::{
    finalize_and_upload, flush, open, CloudTarget, Delivery, EnvelopeError, FinalizeError, Gateway, GatewayConfig,
    Outbox, RetryPolicy, Sample, SessionOutput, TraceKey, UploadError,
};

fn quick_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 2,
        initial_delay_ms: 10,
        max_delay_ms: 20,
    }
}

fn client_entry() -> ClientEntry {
    ClientEntry {
        client_id: "gw-1".into(),
        client_secret: "s3cret".into(),
        scopes: vec![Scope::Upload, Scope::Read],
    }
}

fn target(base: &str, secret: &str) -> CloudTarget {
    CloudTarget {
        client: CloudClient::new(base),
        client_id: "gw-1".into(),
        client_secret: secret.into(),
    }
}

async fn session(data_dir: &std::path::Path, keep_plaintext: bool) -> (GatewayConfig, SessionOutput) {
    let cfg = GatewayConfig {
        data_dir: data_dir.to_path_buf(),
        keep_plaintext,
        ..GatewayConfig::default()
    };
    let clock = Arc::new(ManualClock::new(1_700_000_000_000));
    let gw = Gateway::new(cfg.clone(), clock.clone());
    gw.pair(Arc::new(SimpleDevice::new("gps-1", DeviceKind::Gps))).unwrap();
    let h = gw.start_session("driver-7", "car-3").await.unwrap();
    for i in 0..20 {
        clock.advance(1_000);
        gw.ingest(Sample::Gps {
            source: "gps-1".into(),
            fix: GeoPoint::new(38.25 + f64::from(i) * 1e-4, 21.74),
        })
        .await
        .unwrap();
    }
    (cfg, gw.end_session(&h).await.unwrap())
}

async fn unused_addr() -> SocketAddr {
    let l = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    l.local_addr().unwrap()
}

#[tokio::test]
async fn outbox_holds_trace_until_cloud_returns() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = session(dir.path(), false).await;
    let key = TraceKey::generate();
    let addr = unused_addr().await;
    let base = format!("http://{addr}");

    let first = finalize_and_upload(&cfg, &out, Some(&key), Some(&target(&base, "s3cret")), &quick_retry())
        .await
        .unwrap();
    assert!(matches!(first.delivery, Delivery::Queued(_)));
    assert!(first.envelope.starts_with(MAGIC));
    let outbox = Outbox::open(cfg.outbox_dir()).unwrap();
    assert_eq!(outbox.list().unwrap().len(), 1);
    assert!(first.plaintext.as_ref().unwrap().is_file());

    let cloud_cfg = CloudConfig {
        data_dir: dir.path().join("cloud"),
        clients: vec![client_entry()],
        ..CloudConfig::default()
    };
    let server = spawn(&cloud_cfg, Arc::new(SystemClock), addr).await.unwrap();
    let report = flush(&outbox, &target(&server.base_url(), "s3cret"), &quick_retry())
        .await
        .unwrap();
    assert_eq!(report.uploaded.len(), 1);
    let receipt = &report.uploaded[0].1;
    assert_eq!(receipt.trace_ref, sha256_hex(&first.envelope));
    assert_eq!(receipt.trace_ref, first.envelope_sha256);
    assert!(outbox.list().unwrap().is_empty());

    let client = CloudClient::new(server.base_url());
    let token = client.token("gw-1", "s3cret").await.unwrap().access_token;
    let (blob, meta) = client.get(&token, &receipt.trace_ref).await.unwrap();
    assert_eq!(meta.manifest, out.manifest);
    let csv = open(&key, &meta.manifest.to_json(), &blob).unwrap();
    assert_eq!(sha256_hex(&csv), out.manifest.csv_sha256);

    let mut tampered = blob.clone();
    let last = tampered.len() - 1;
    tampered[last] ^= 0x01;
    assert_eq!(open(&key, &meta.manifest.to_json(), &tampered), Err(EnvelopeError::AuthFailed));
}

#[tokio::test]
async fn direct_upload_drops_plaintext_after_receipt() {
    let dir = tempfile::tempdir().unwrap();
    let cloud_cfg = CloudConfig {
        data_dir: dir.path().join("cloud"),
        clients: vec![client_entry()],
        ..CloudConfig::default()
    };
    let server = spawn(&cloud_cfg, Arc::new(SystemClock), "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    let key = TraceKey::generate();

    let (cfg, out) = session(&dir.path().join("a"), false).await;
    let done = finalize_and_upload(&cfg, &out, Some(&key), Some(&target(&server.base_url(), "s3cret")), &quick_retry())
        .await
        .unwrap();
    let Delivery::Uploaded(receipt) = &done.delivery else {
        panic!("{:?}", done.delivery)
    };
    assert_eq!(receipt.size_bytes, done.envelope.len() as u64);
    assert!(done.plaintext.is_none());
    assert_eq!(std::fs::read_dir(cfg.trace_dir()).unwrap().count(), 0);

    let (cfg, out) = session(&dir.path().join("b"), true).await;
    let kept = finalize_and_upload(&cfg, &out, Some(&key), Some(&target(&server.base_url(), "s3cret")), &quick_retry())
        .await
        .unwrap();
    assert!(matches!(kept.delivery, Delivery::Uploaded(_)));
    assert_eq!(std::fs::read(kept.plaintext.unwrap()).unwrap(), out.csv);
}

#[tokio::test]
async fn bad_credentials_and_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let cloud_cfg = CloudConfig {
        data_dir: dir.path().join("cloud"),
        clients: vec![client_entry()],
        ..CloudConfig::default()
    };
    let server = spawn(&cloud_cfg, Arc::new(SystemClock), "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    let (cfg, out) = session(&dir.path().join("gw"), false).await;
    assert!(matches!(
        finalize_and_upload(&cfg, &out, None, None, &quick_retry()).await,
        Err(FinalizeError::KeyMissing)
    ));
    let key = TraceKey::generate();
    let err = finalize_and_upload(&cfg, &out, Some(&key), Some(&target(&server.base_url(), "nope")), &quick_retry())
        .await
        .unwrap_err();
    assert!(matches!(err, FinalizeError::Upload(UploadError::AuthFailed(_))), "{err}");
    // The sealed trace stays queued for a later attempt.
    assert_eq!(Outbox::open(cfg.outbox_dir()).unwrap().list().unwrap().len(), 1);
}

use std::collections::HashSet;
use std::sync::Arc;

use fogdrive_cloud::blob::storage_key;
use fogdrive_cloud::{spawn, ClientEntry, CloudClient, CloudConfig, ListFilter, RunningServer, Scope};
use fogdrive_core::trace::{sha256_hex, SessionManifest};
use fogdrive_core::ManualClock;
use proptest::prelude::*;
use uuid::Uuid;

struct Fixture {
    _dir: tempfile::TempDir,
    clock: Arc<ManualClock>,
    server: RunningServer,
    client: CloudClient,
}

fn config(dir: &std::path::Path) -> CloudConfig {
    CloudConfig {
        data_dir: dir.to_path_buf(),
        clients: vec![
            ClientEntry {
                client_id: "gateway".into(),
                client_secret: "gw-secret".into(),
                scopes: vec![Scope::Upload],
            },
            ClientEntry {
                client_id: "analyst".into(),
                client_secret: "an-secret".into(),
                scopes: vec![Scope::Upload, Scope::Read],
            },
        ],
        ..Default::default()
    }
}

async fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(1_700_000_000_000));
    let server = spawn(&config(dir.path()), clock.clone(), "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    let client = CloudClient::new(server.base_url());
    Fixture {
        _dir: dir,
        clock,
        server,
        client,
    }
}

fn manifest(driver: &str, started_at: i64) -> SessionManifest {
    SessionManifest {
        session_id: Uuid::new_v4(),
        driver_id: driver.into(),
        vehicle_id: "car-1".into(),
        started_at,
        ended_at: started_at + 300_000,
        devices: vec![],
        row_count: 0,
        csv_sha256: sha256_hex(b""),
        schema_version: "1".into(),
    }
}

async fn token(f: &Fixture, who: &str) -> String {
    let secret = if who == "gateway" { "gw-secret" } else { "an-secret" };
    f.client.token(who, secret).await.unwrap().access_token
}

#[tokio::test]
async fn token_issue_and_failures() {
    let f = fixture().await;
    let t = f.client.token("gateway", "gw-secret").await.unwrap();
    assert_eq!(t.expires_in, 3600);
    assert_eq!(t.token_type, "Bearer");
    assert!(t.access_token.len() >= 32);
    let err = f.client.token("gateway", "wrong").await.unwrap_err();
    assert_eq!(err.code(), Some("invalid-credentials"));

    f.clock.advance(3_600_000);
    let err = f.client.list(&t.access_token, &ListFilter::default()).await.unwrap_err();
    assert_eq!(err.code(), Some("token-expired"));
    let err = f
        .client
        .upload(&t.access_token, &manifest("d", 0), vec![1])
        .await
        .unwrap_err();
    assert_eq!(err.code(), Some("token-expired"));
}

#[tokio::test]
async fn upload_get_round_trip_and_dedup() {
    let f = fixture().await;
    let up = token(&f, "gateway").await;
    let read = token(&f, "analyst").await;
    let blob: Vec<u8> = (0..1024 * 1024).map(|i| (i * 31 % 251) as u8).collect();
    let m = manifest("driver-7", 1_700_000_000_000);
    let r1 = f.client.upload(&up, &m, blob.clone()).await.unwrap();
    assert_eq!(r1.trace_ref, sha256_hex(&blob));
    assert_eq!(r1.sha256, r1.trace_ref);
    assert_eq!(r1.size_bytes, 1024 * 1024);
    let r2 = f.client.upload(&up, &m, blob.clone()).await.unwrap();
    assert_eq!(r1, r2);

    let (bytes, meta) = f.client.get(&read, &r1.trace_ref).await.unwrap();
    assert_eq!(bytes, blob);
    assert_eq!(meta.manifest, m);
    assert_eq!(meta.uploader, "gateway");
    assert!(f.server.repo.blobs.root().join(storage_key(&r1.trace_ref)).is_file());
    assert_eq!(f.server.repo.blobs.list_refs().unwrap().len(), 1);

    let err = f.client.get(&up, &r1.trace_ref).await.unwrap_err();
    assert_eq!(err.code(), Some("forbidden"));
    let err = f.client.get(&read, &"0".repeat(64)).await.unwrap_err();
    assert_eq!(err.code(), Some("not-found"));
    let err = f.client.get(&read, "not-a-ref").await.unwrap_err();
    assert_eq!(err.code(), Some("not-found"));
}

#[tokio::test]
async fn upload_errors() {
    let f = fixture().await;
    let up = token(&f, "gateway").await;
    let err = f.client.upload_parts(&up, None, Some(vec![1, 2])).await.unwrap_err();
    assert_eq!(err.code(), Some("missing-part"));
    let good = manifest("d", 0).to_json();
    let err = f.client.upload_parts(&up, Some(good), None).await.unwrap_err();
    assert_eq!(err.code(), Some("missing-part"));
    let err = f
        .client
        .upload_parts(&up, Some(b"{not json".to_vec()), Some(vec![1]))
        .await
        .unwrap_err();
    assert_eq!(err.code(), Some("manifest-invalid"));
    let err = f.client.upload_parts("bogus", None, None).await.unwrap_err();
    assert_eq!(err.code(), Some("unauthorized"));
    assert!(f.server.repo.blobs.list_refs().unwrap().is_empty());
}

#[tokio::test]
async fn listing_filters_orders_and_pages() {
    let f = fixture().await;
    let up = token(&f, "gateway").await;
    let read = token(&f, "analyst").await;
    assert!(f.client.list(&read, &ListFilter::default()).await.unwrap().is_empty());
    let mut refs = Vec::new();
    for i in 0..3u8 {
        f.clock.advance(1000);
        let r = f
            .client
            .upload(&up, &manifest("alice", 1_000 * i as i64), vec![i; 10])
            .await
            .unwrap();
        refs.push(r.trace_ref);
    }
    f.client.upload(&up, &manifest("bob", 0), vec![9; 10]).await.unwrap();

    let alice = ListFilter {
        driver_id: Some("alice".into()),
        ..Default::default()
    };
    let got: Vec<_> = f
        .client
        .list(&read, &alice)
        .await
        .unwrap()
        .into_iter()
        .map(|m| m.trace_ref)
        .collect();
    refs.reverse();
    assert_eq!(got, refs);

    let page = |offset| ListFilter {
        limit: Some(2),
        offset: Some(offset),
        ..alice.clone()
    };
    assert_eq!(f.client.list(&read, &page(0)).await.unwrap().len(), 2);
    assert_eq!(f.client.list(&read, &page(2)).await.unwrap().len(), 1);

    let err = f.client.list(&up, &alice).await.unwrap_err();
    assert_eq!(err.code(), Some("forbidden"));
}

#[tokio::test]
async fn storage_full() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.quota_bytes = Some(100);
    let clock = Arc::new(ManualClock::new(0));
    let server = spawn(&cfg, clock, "127.0.0.1:0".parse().unwrap()).await.unwrap();
    let client = CloudClient::new(server.base_url());
    let t = client.token("gateway", "gw-secret").await.unwrap().access_token;
    client.upload(&t, &manifest("d", 0), vec![1; 80]).await.unwrap();
    let err = client.upload(&t, &manifest("d", 0), vec![2; 80]).await.unwrap_err();
    assert_eq!(err.code(), Some("storage-full"));
    assert_eq!(server.repo.meta.refs().unwrap().len(), 1);
}

#[tokio::test]
async fn concurrent_identical_uploads_store_one_object() {
    let f = fixture().await;
    let up = token(&f, "gateway").await;
    let m = manifest("d", 0);
    let blob = vec![42u8; 50_000];
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (c, t, m, b) = (f.client.clone(), up.clone(), m.clone(), blob.clone());
            tokio::spawn(async move { c.upload(&t, &m, b).await.unwrap().trace_ref })
        })
        .collect();
    let mut refs = HashSet::new();
    for t in tasks {
        refs.insert(t.await.unwrap());
    }
    assert_eq!(refs.len(), 1);
    assert_eq!(f.server.repo.blobs.list_refs().unwrap().len(), 1);
    assert_eq!(f.server.repo.meta.refs().unwrap().len(), 1);
}

#[tokio::test]
async fn restart_reconciles_orphans() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let clock = Arc::new(ManualClock::new(0));
    let kept;
    {
        let server = spawn(&cfg, clock.clone(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
        let client = CloudClient::new(server.base_url());
        let t = client.token("gateway", "gw-secret").await.unwrap().access_token;
        kept = client.upload(&t, &manifest("d", 0), vec![1; 10]).await.unwrap().trace_ref;
        let gone = client.upload(&t, &manifest("d", 0), vec![2; 10]).await.unwrap().trace_ref;
        // Blob without a row, and a row whose blob vanished.
        server.repo.blobs.put(b"orphan").unwrap();
        std::fs::remove_file(server.repo.blobs.path(&gone)).unwrap();
    }
    let server = spawn(&cfg, clock, "127.0.0.1:0".parse().unwrap()).await.unwrap();
    assert_eq!(server.repo.blobs.list_refs().unwrap(), vec![kept.clone()]);
    assert_eq!(server.repo.meta.refs().unwrap(), vec![kept]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distinct_blobs_get_distinct_refs(blobs in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..256), 1..24)) {
        let dir = tempfile::tempdir().unwrap();
        let store = fogdrive_cloud::blob::BlobStore::open(dir.path(), None).unwrap();
        let distinct: HashSet<&Vec<u8>> = blobs.iter().collect();
        let mut refs = HashSet::new();
        for b in &blobs {
            let out = store.put(b).unwrap();
            prop_assert_eq!(&out.trace_ref, &sha256_hex(b));
            let stored = store.get(&out.trace_ref).unwrap();
            prop_assert_eq!(stored.as_ref(), Some(b));
            refs.insert(out.trace_ref);
        }
        prop_assert_eq!(refs.len(), distinct.len());
        prop_assert_eq!(store.list_refs().unwrap().len(), distinct.len());
    }
}

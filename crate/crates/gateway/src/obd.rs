//! Back-to-back OBD polling with reconnect.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use fogdrive_core::obd::{encode_request, parse_response, CORE_PIDS};
use fogdrive_core::vehicle::{serve_connection, Ecu};
use fogdrive_core::TokioClock;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio::task::AbortHandle;

use crate::rows::Sample;
use crate::session::Gateway;

pub trait ObdStream: AsyncRead + AsyncWrite + Unpin + Send {}
impl<T: AsyncRead + AsyncWrite + Unpin + Send> ObdStream for T {}

#[async_trait]
pub trait ObdConnector: Send + Sync {
    async fn connect(&self) -> std::io::Result<Box<dyn ObdStream>>;
}

pub struct TcpConnector(pub SocketAddr);

#[async_trait]
impl ObdConnector for TcpConnector {
    async fn connect(&self) -> std::io::Result<Box<dyn ObdStream>> {
        let s = TcpStream::connect(self.0).await?;
        s.set_nodelay(true)?;
        Ok(Box::new(s))
    }
}

/// Links to an in-process ECU over a byte pipe. Links can be cut and
/// refused to exercise reconnect behaviour.
pub struct EcuConnector {
    ecu: Arc<Ecu>,
    clock: TokioClock,
    online: AtomicBool,
    links: Mutex<Vec<AbortHandle>>,
}

impl EcuConnector {
    pub fn new(ecu: Arc<Ecu>, clock: TokioClock) -> Self {
        Self {
            ecu,
            clock,
            online: AtomicBool::new(true),
            links: Mutex::new(Vec::new()),
        }
    }

    /// Refuse (false) or accept (true) new connections.
    pub fn set_online(&self, online: bool) {
        self.online.store(online, Ordering::SeqCst);
    }

    /// Drops every open link.
    pub fn sever(&self) {
        for h in self.links.lock().expect("links").drain(..) {
            h.abort();
        }
    }
}

#[async_trait]
impl ObdConnector for EcuConnector {
    async fn connect(&self) -> std::io::Result<Box<dyn ObdStream>> {
        if !self.online.load(Ordering::SeqCst) {
            return Err(std::io::Error::new(std::io::ErrorKind::ConnectionRefused, "adapter offline"));
        }
        let (client, server) = tokio::io::duplex(256);
        let task = tokio::spawn(serve_connection(self.ecu.clone(), server, self.clock));
        self.links.lock().expect("links").push(task.abort_handle());
        Ok(Box::new(client))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ObdLoopConfig {
    pub reply_timeout_ms: u64,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for ObdLoopConfig {
    fn default() -> Self {
        Self {
            reply_timeout_ms: 2_000,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

#[derive(Debug, Default)]
pub struct ObdStats {
    pub replies: AtomicU64,
    pub bad_replies: AtomicU64,
    pub connects: AtomicU64,
    /// (lost_at, restored_at) in gateway ms.
    pub gaps: Mutex<Vec<(i64, i64)>>,
    /// Every reconnect wait, in order.
    pub backoffs_ms: Mutex<Vec<u64>>,
}

impl ObdStats {
    pub fn replies(&self) -> u64 {
        self.replies.load(Ordering::SeqCst)
    }
}

async fn exchange(
    rd: &mut BufReader<tokio::io::ReadHalf<Box<dyn ObdStream>>>,
    wr: &mut tokio::io::WriteHalf<Box<dyn ObdStream>>,
    request: &[u8],
    line: &mut Vec<u8>,
    timeout: Duration,
) -> std::io::Result<()> {
    wr.write_all(request).await?;
    wr.flush().await?;
    line.clear();
    let n = tokio::time::timeout(timeout, rd.read_until(b'\r', line))
        .await
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::TimedOut, "no reply"))??;
    if n == 0 || line.last() != Some(&b'\r') {
        return Err(std::io::ErrorKind::UnexpectedEof.into());
    }
    Ok(())
}

/// Polls the core PIDs round-robin until aborted, one request in flight.
pub async fn run_obd_loop(
    gateway: Arc<Gateway>,
    source: String,
    connector: Arc<dyn ObdConnector>,
    cfg: ObdLoopConfig,
    stats: Arc<ObdStats>,
) {
    let timeout = Duration::from_millis(cfg.reply_timeout_ms);
    let mut backoff = cfg.initial_backoff_ms;
    let mut lost_at: Option<i64> = None;
    let mut pids = CORE_PIDS.iter().cycle();
    let mut line = Vec::with_capacity(32);
    loop {
        match connector.connect().await {
            Ok(stream) => {
                stats.connects.fetch_add(1, Ordering::SeqCst);
                if let Some(t) = lost_at.take() {
                    stats.gaps.lock().expect("gaps").push((t, gateway.now_ms()));
                    tracing::info!(source, "obd link restored");
                }
                let (rd, mut wr) = tokio::io::split(stream);
                let mut rd = BufReader::new(rd);
                loop {
                    let pid = *pids.next().expect("cycle");
                    let request = encode_request(pid).expect("core pids are mode 01");
                    if let Err(e) = exchange(&mut rd, &mut wr, &request, &mut line, timeout).await {
                        tracing::warn!(source, "obd link lost: {e}");
                        break;
                    }
                    backoff = cfg.initial_backoff_ms;
                    match parse_response(&line, pid) {
                        Ok(resp) => {
                            stats.replies.fetch_add(1, Ordering::SeqCst);
                            let _ = gateway
                                .ingest(Sample::Obd {
                                    source: source.clone(),
                                    value: resp.value,
                                })
                                .await;
                        }
                        Err(e) => {
                            stats.bad_replies.fetch_add(1, Ordering::SeqCst);
                            tracing::debug!(source, "bad obd reply: {e}");
                        }
                    }
                }
                lost_at = Some(gateway.now_ms());
            }
            Err(e) => {
                lost_at.get_or_insert(gateway.now_ms());
                tracing::warn!(source, "obd connect failed: {e}");
            }
        }
        stats.backoffs_ms.lock().expect("backoffs").push(backoff);
        tokio::time::sleep(Duration::from_millis(backoff)).await;
        backoff = (backoff * 2).min(cfg.max_backoff_ms);
    }
}

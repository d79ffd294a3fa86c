//! Line-oriented device link for wearables reached over a socket.
//!
//! ```text
//! -> PAIR <gateway_id>\n        <- OK <device_id> <kind>\n | ERR <reason>\n
//! -> POLL\n        (on-demand)  <- <sample json>\n
//! -> SUBSCRIBE\n   (push)       <- <sample json>\n ... until close
//! ```

use std::sync::Arc;

use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncWrite, AsyncWriteExt, BufReader, Lines, ReadHalf, WriteHalf};

use super::{subscribe, AnyWearable, WearableSample};
use crate::clock::Clock;
use crate::pairing::DeviceKind;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("device refused: {0}")]
    Refused(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

/// Device side of the link.
pub async fn serve_device<S>(device: AnyWearable, stream: S, clock: Arc<dyn Clock>) -> Result<(), WireError>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let (rd, mut wr) = tokio::io::split(stream);
    let mut lines = BufReader::new(rd).lines();
    while let Some(line) = lines.next_line().await? {
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some("PAIR"), Some(gw)) => match device.as_pairable().bond(gw) {
                Ok(()) => {
                    let msg = format!("OK {} {}\n", device.as_pairable().device_id(), device.kind().as_str());
                    wr.write_all(msg.as_bytes()).await?;
                }
                Err(e) => wr.write_all(format!("ERR {e}\n").as_bytes()).await?,
            },
            (Some("POLL"), None) => match &device {
                AnyWearable::MiBand(band) => match band.poll_heart_rate(clock.now_ms()) {
                    Ok(s) => write_sample(&mut wr, &WearableSample::Heart(s)).await?,
                    Err(e) => wr.write_all(format!("ERR {e}\n").as_bytes()).await?,
                },
                _ => wr.write_all(b"ERR poll not supported\n").await?,
            },
            (Some("SUBSCRIBE"), None) => {
                let sub = match &device {
                    AnyWearable::Polar(d) => subscribe(d.clone(), clock.clone()),
                    AnyWearable::Spire(d) => subscribe(d.clone(), clock.clone()),
                    AnyWearable::MiBand(_) => {
                        wr.write_all(b"ERR subscribe not supported\n").await?;
                        continue;
                    }
                };
                match sub {
                    Ok(mut sub) => {
                        while let Some(s) = sub.recv().await {
                            write_sample(&mut wr, &s).await?;
                        }
                        return Ok(());
                    }
                    Err(e) => wr.write_all(format!("ERR {e}\n").as_bytes()).await?,
                }
            }
            _ => wr.write_all(b"ERR unknown command\n").await?,
        }
        wr.flush().await?;
    }
    Ok(())
}

async fn write_sample<W: AsyncWrite + Unpin>(wr: &mut W, sample: &WearableSample) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(sample).map_err(std::io::Error::other)?;
    line.push(b'\n');
    wr.write_all(&line).await?;
    wr.flush().await
}

/// Gateway side of the link.
pub struct RemoteWearable<S> {
    device_id: String,
    kind: DeviceKind,
    lines: Lines<BufReader<ReadHalf<S>>>,
    wr: WriteHalf<S>,
}

impl<S: AsyncRead + AsyncWrite + Unpin> RemoteWearable<S> {
    /// Performs the pairing handshake.
    pub async fn pair(stream: S, gateway_id: &str) -> Result<Self, WireError> {
        let (rd, mut wr) = tokio::io::split(stream);
        let mut lines = BufReader::new(rd).lines();
        wr.write_all(format!("PAIR {gateway_id}\n").as_bytes()).await?;
        wr.flush().await?;
        let reply = lines
            .next_line()
            .await?
            .ok_or_else(|| WireError::Protocol("closed during pairing".into()))?;
        let mut parts = reply.splitn(3, ' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some("OK"), Some(id), Some(kind)) => {
                let kind: DeviceKind = serde_json::from_str(&format!("\"{kind}\""))
                    .map_err(|_| WireError::Protocol(format!("unknown kind {kind}")))?;
                Ok(Self {
                    device_id: id.to_string(),
                    kind,
                    lines,
                    wr,
                })
            }
            (Some("ERR"), ..) => Err(WireError::Refused(reply[4..].to_string())),
            _ => Err(WireError::Protocol(reply)),
        }
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn kind(&self) -> DeviceKind {
        self.kind
    }

    pub async fn poll(&mut self) -> Result<WearableSample, WireError> {
        self.command("POLL").await?;
        self.next_sample()
            .await?
            .ok_or_else(|| WireError::Protocol("closed during poll".into()))
    }

    pub async fn subscribe(&mut self) -> Result<(), WireError> {
        self.command("SUBSCRIBE").await
    }

    /// Next pushed sample; `None` when the device closes the stream.
    pub async fn next_sample(&mut self) -> Result<Option<WearableSample>, WireError> {
        let Some(line) = self.lines.next_line().await? else {
            return Ok(None);
        };
        if let Some(reason) = line.strip_prefix("ERR ") {
            return Err(WireError::Refused(reason.to_string()));
        }
        serde_json::from_str(&line)
            .map(Some)
            .map_err(|e| WireError::Protocol(e.to_string()))
    }

    async fn command(&mut self, cmd: &str) -> Result<(), WireError> {
        self.wr.write_all(format!("{cmd}\n").as_bytes()).await?;
        self.wr.flush().await?;
        Ok(())
    }
}

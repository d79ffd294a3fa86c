use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpListener;

use super::latency::{LatencyModel, LatencyModelError, LatencySampler};
use super::profile::{DriveProfile, ProfileError};
use super::state::{step, DynamicsParams, VehicleState};
use crate::clock::TokioClock;
use crate::obd::{self, PidId, NRC_SUB_FUNCTION_NOT_SUPPORTED};

pub const DEFAULT_TICK_MS: u64 = 100;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Latency(#[from] LatencyModelError),
    #[error("tick must be positive")]
    ZeroTick,
}

/// Vehicle simulator configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub tick_ms: u64,
    pub latency: LatencyModel,
    pub dynamics: DynamicsParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tick_ms: DEFAULT_TICK_MS,
            latency: LatencyModel::default(),
            dynamics: DynamicsParams::default(),
        }
    }
}

/// Fixed-tick kinematic simulation, advanced lazily to whatever time a
/// consumer asks about.
#[derive(Debug, Clone)]
pub struct Simulator {
    state: VehicleState,
    profile: DriveProfile,
    params: DynamicsParams,
    seed: u64,
    tick_ms: u64,
}

impl Simulator {
    pub fn new(profile: DriveProfile, config: &SimConfig) -> Result<Self, SimError> {
        profile.validate()?;
        if config.tick_ms == 0 {
            return Err(SimError::ZeroTick);
        }
        Ok(Self {
            state: VehicleState::parked(profile.route[0]),
            profile,
            params: config.dynamics,
            seed: config.seed,
            tick_ms: config.tick_ms,
        })
    }

    pub fn with_state(mut self, state: VehicleState) -> Self {
        self.state = state;
        self
    }

    pub fn state(&self) -> VehicleState {
        self.state
    }

    pub fn tick_ms(&self) -> u64 {
        self.tick_ms
    }

    pub fn profile(&self) -> &DriveProfile {
        &self.profile
    }

    pub fn tick(&mut self) -> VehicleState {
        self.state = step(&self.state, &self.profile, &self.params, self.seed, self.tick_ms);
        self.state
    }

    /// Steps whole ticks until the next tick would pass `t_ms`. Never moves
    /// backwards.
    pub fn advance_to(&mut self, t_ms: f64) -> VehicleState {
        while (self.state.sim_time_ms + self.tick_ms) as f64 <= t_ms {
            self.tick();
        }
        self.state
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcuReply {
    pub frame: Vec<u8>,
    pub delay_ms: f64,
    pub emitted_at_ms: f64,
}

/// Simulated ECU answering OBD requests from the shared vehicle state.
#[derive(Debug)]
pub struct Ecu {
    sim: Mutex<Simulator>,
    latency: Mutex<LatencySampler>,
    model: LatencyModel,
}

impl Ecu {
    pub fn new(profile: DriveProfile, config: &SimConfig) -> Result<Self, SimError> {
        Ok(Self::from_simulator(
            Simulator::new(profile, config)?,
            config.latency,
            config.seed,
        )?)
    }

    pub fn from_simulator(sim: Simulator, model: LatencyModel, seed: u64) -> Result<Self, LatencyModelError> {
        // Latency stream is decorrelated from the drive-profile seed.
        let sampler = model.sampler(seed ^ 0x0BD1_1A7E_4C7E_0000)?;
        Ok(Self {
            sim: Mutex::new(sim),
            latency: Mutex::new(sampler),
            model,
        })
    }

    pub fn latency_model(&self) -> LatencyModel {
        self.model
    }

    /// State snapshot at sim time `t_ms`.
    pub fn snapshot_at(&self, t_ms: f64) -> VehicleState {
        self.sim.lock().expect("simulator lock").advance_to(t_ms)
    }

    pub fn sample_delay_ms(&self) -> f64 {
        self.latency.lock().expect("latency lock").sample_ms()
    }

    /// Reply frame reflecting the vehicle at `at_ms`.
    pub fn reply_at(&self, request: &[u8], at_ms: f64) -> Vec<u8> {
        let pid = match obd::parse_request(request) {
            Ok(pid) => pid,
            Err(obd::ObdError::UnsupportedMode(mode)) => {
                return obd::encode_negative_response(mode, NRC_SUB_FUNCTION_NOT_SUPPORTED)
            }
            Err(_) => return b"?\r".to_vec(),
        };
        let state = self.snapshot_at(at_ms);
        match payload_for(pid, &state) {
            Some(data) => obd::encode_response(pid, &data),
            None => obd::encode_negative_response(pid.mode, NRC_SUB_FUNCTION_NOT_SUPPORTED),
        }
    }

    /// Samples a delay and produces the reply as it would be emitted. Used
    /// directly by discrete-event drivers and indirectly by [`serve_connection`].
    pub fn handle_request(&self, request: &[u8], issued_at_ms: f64) -> EcuReply {
        let delay_ms = self.sample_delay_ms();
        let emitted_at_ms = issued_at_ms + delay_ms;
        EcuReply {
            frame: self.reply_at(request, emitted_at_ms),
            delay_ms,
            emitted_at_ms,
        }
    }
}

fn payload_for(pid: PidId, state: &VehicleState) -> Option<Vec<u8>> {
    let value = match pid.pid {
        obd::PID_ENGINE_RPM => state.rpm,
        obd::PID_VEHICLE_SPEED => state.speed_kmh,
        obd::PID_THROTTLE_POSITION => state.throttle_pct,
        _ => return None,
    };
    obd::encode_value(pid, value)
}

/// Serves one OBD connection: CR-delimited requests, replies strictly FIFO,
/// each delayed by a fresh latency sample.
pub async fn serve_connection<S>(ecu: Arc<Ecu>, stream: S, clock: TokioClock) -> std::io::Result<()>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let (rd, mut wr) = tokio::io::split(stream);
    let mut rd = BufReader::new(rd);
    let mut line = Vec::with_capacity(16);
    loop {
        line.clear();
        if rd.read_until(b'\r', &mut line).await? == 0 {
            return Ok(());
        }
        // Tolerate LF left over from CRLF senders.
        while line.first() == Some(&b'\n') {
            line.remove(0);
        }
        if line.last() != Some(&b'\r') {
            return Ok(());
        }
        let delay = ecu.sample_delay_ms();
        tokio::time::sleep(Duration::from_secs_f64(delay / 1000.0)).await;
        let reply = ecu.reply_at(&line, clock.elapsed_ms());
        wr.write_all(&reply).await?;
        wr.flush().await?;
    }
}

/// Accepts TCP connections and serves each on its own task.
pub async fn listen(ecu: Arc<Ecu>, listener: TcpListener, clock: TokioClock) -> std::io::Result<()> {
    loop {
        let (sock, _) = listener.accept().await?;
        sock.set_nodelay(true)?;
        let ecu = ecu.clone();
        tokio::spawn(async move {
            let _ = serve_connection(ecu, sock, clock).await;
        });
    }
}

//! Back-to-back OBD polling bench: after every reply, count the replies seen
//! in the trailing window.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};

use fogdrive_core::obd::{encode_request, parse_response, CORE_PIDS};
use fogdrive_core::vehicle::{listen, DriveProfile, Ecu, LatencyModel, SimConfig, SimError};
use fogdrive_core::TokioClock;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub duration_s: f64,
    pub window_s: f64,
    pub latency: LatencyModel,
    pub seed: u64,
    pub profile: String,
    /// Fraction of the plateau that marks the end of the ramp.
    pub ramp_fraction: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            duration_s: 300.0,
            window_s: 60.0,
            latency: LatencyModel::default(),
            seed: 42,
            profile: "calm".into(),
            ramp_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchUpdate {
    pub update: u64,
    pub t_ms: f64,
    pub latency_ms: f64,
    pub window_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |q: f64| sorted[((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        Self {
            count: sorted.len() as u64,
            mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
            min_ms: sorted[0],
            max_ms: sorted[sorted.len() - 1],
            p50_ms: rank(0.5),
            p95_ms: rank(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub latency_model: LatencyModel,
    pub duration_s: f64,
    pub window_s: f64,
    pub updates: Vec<BenchUpdate>,
    pub latency: LatencyStats,
    /// Mean window count once the first full window has elapsed.
    pub plateau: Option<f64>,
    /// Updates needed to reach the ramp fraction of the plateau.
    pub ramp_updates: Option<u64>,
    pub bad_replies: u64,
    /// Set when the run stopped early; the report covers what was measured.
    pub error: Option<String>,
}

impl BenchReport {
    /// Builds the report from reply times and delays, both in ms.
    pub fn from_replies(cfg: &BenchConfig, replies: &[(f64, f64)], bad_replies: u64, error: Option<String>) -> Self {
        let window_ms = cfg.window_s * 1000.0;
        let mut window: VecDeque<f64> = VecDeque::new();
        let mut updates = Vec::with_capacity(replies.len());
        for (i, &(t, latency)) in replies.iter().enumerate() {
            window.push_back(t);
            while window.front().is_some_and(|&f| f <= t - window_ms) {
                window.pop_front();
            }
            updates.push(BenchUpdate {
                update: i as u64 + 1,
                t_ms: t,
                latency_ms: latency,
                window_count: window.len() as u64,
            });
        }
        let full: Vec<f64> = updates
            .iter()
            .filter(|u| u.t_ms >= window_ms)
            .map(|u| u.window_count as f64)
            .collect();
        let plateau = (!full.is_empty()).then(|| full.iter().sum::<f64>() / full.len() as f64);
        let ramp_updates = plateau.and_then(|p| {
            updates
                .iter()
                .find(|u| u.window_count as f64 >= cfg.ramp_fraction * p)
                .map(|u| u.update)
        });
        let latencies: Vec<f64> = replies.iter().map(|r| r.1).collect();
        Self {
            latency_model: cfg.latency,
            duration_s: cfg.duration_s,
            window_s: cfg.window_s,
            latency: LatencyStats::from_samples(&latencies),
            updates,
            plateau,
            ramp_updates,
            bad_replies,
            error,
        }
    }

    /// Invariant breaches: delays outside the model's support, or a plateau
    /// above what the fastest possible reply allows.
    pub fn violations(&self) -> Vec<String> {
        let (lo, hi) = (self.latency_model.min_ms(), self.latency_model.max_ms());
        let mut out: Vec<String> = self
            .updates
            .iter()
            .filter(|u| u.latency_ms < lo || u.latency_ms > hi)
            .map(|u| format!("update {} latency {} ms outside [{lo}, {hi}]", u.update, u.latency_ms))
            .collect();
        let ceiling = self.window_s * 1000.0 / lo;
        if let Some(p) = self.plateau.filter(|&p| p > ceiling) {
            out.push(format!("plateau {p:.1} exceeds {ceiling:.1}"));
        }
        out
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        for u in &self.updates {
            w.serialize(u)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }

    pub fn summary(&self) -> String {
        let l = &self.latency;
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.1}"));
        let mut s = format!(
            "updates: {}\nlatency ms: mean {:.2} min {:.2} max {:.2} p50 {:.2} p95 {:.2}\nplateau (commands per {} s window): {}\nramp: {}\n",
            self.updates.len(),
            l.mean_ms,
            l.min_ms,
            l.max_ms,
            l.p50_ms,
            l.p95_ms,
            self.window_s,
            opt(self.plateau),
            self.ramp_updates.map_or("n/a".to_string(), |r| format!("{r} updates")),
        );
        if self.bad_replies > 0 {
            s.push_str(&format!("bad replies: {}\n", self.bad_replies));
        }
        if let Some(e) = &self.error {
            s.push_str(&format!("stopped early: {e}\n"));
        }
        s
    }
}

fn ecu_for(cfg: &BenchConfig) -> Result<Ecu, BenchError> {
    let profile = DriveProfile::builtin(&cfg.profile).map_err(|e| BenchError::Setup(e.to_string()))?;
    Ok(Ecu::new(
        profile,
        &SimConfig {
            seed: cfg.seed,
            latency: cfg.latency,
            ..SimConfig::default()
        },
    )?)
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("bench setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Discrete-event run: each request is issued the instant the previous
/// reply lands, so no wall time passes.
pub fn simulate(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let ecu = ecu_for(cfg)?;
    let end_ms = cfg.duration_s * 1000.0;
    let mut t = 0.0;
    let mut replies = Vec::new();
    let mut bad = 0;
    for pid in CORE_PIDS.iter().cycle() {
        let request = encode_request(*pid).expect("core pids are mode 01");
        let reply = ecu.handle_request(&request, t);
        if reply.emitted_at_ms > end_ms {
            break;
        }
        t = reply.emitted_at_ms;
        if parse_response(&reply.frame, *pid).is_ok() {
            replies.push((t, reply.delay_ms));
        } else {
            bad += 1;
        }
    }
    Ok(BenchReport::from_replies(cfg, &replies, bad, None))
}

/// Wall-clock run over a loopback TCP connection to a served ECU.
pub async fn run_live(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let ecu = Arc::new(ecu_for(cfg)?);
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let server = tokio::spawn(listen(ecu, listener, TokioClock::from_system()));
    let stream = TcpStream::connect(addr).await?;
    stream.set_nodelay(true)?;
    let (rd, mut wr) = stream.into_split();
    let mut rd = BufReader::new(rd);
    let start = Instant::now();
    let end = Duration::from_secs_f64(cfg.duration_s);
    let mut replies = Vec::new();
    let mut bad = 0;
    let mut error = None;
    let mut line = Vec::new();
    for pid in CORE_PIDS.iter().cycle() {
        if start.elapsed() >= end {
            break;
        }
        let issued = Instant::now();
        let request = encode_request(*pid).expect("core pids are mode 01");
        line.clear();
        let io = async {
            wr.write_all(&request).await?;
            rd.read_until(b'\r', &mut line).await
        };
        match io.await {
            Ok(0) => {
                error = Some("ecu closed the connection".into());
                break;
            }
            Ok(_) => {}
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
        let t = start.elapsed();
        if t > end {
            break;
        }
        if parse_response(&line, *pid).is_ok() {
            replies.push((t.as_secs_f64() * 1000.0, issued.elapsed().as_secs_f64() * 1000.0));
        } else {
            bad += 1;
        }
    }
    server.abort();
    Ok(BenchReport::from_replies(cfg, &replies, bad, error))
}

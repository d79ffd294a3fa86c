use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fogdrive_cli::bench::{run_live, simulate, BenchReport};
use fogdrive_cli::replay::{load_trace, replay};
use fogdrive_cli::run::{load_or_create_key, run, spawn_local_cloud, RunOptions};
use fogdrive_cli::verify::verify_remote;
use fogdrive_cli::{erase, Config, Stage, StageError};
use fogdrive_cloud::CloudClient;
use fogdrive_core::vehicle::LatencyModel;
use fogdrive_gateway::EraseScope;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "fogdrive", version, about = "Driving-behaviour data collection on a simulated fog gateway")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every simulator.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Spawn the cloud store in-process and create a trace key if needed.
    #[arg(long, global = true)]
    self_contained: bool,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Use the wall clock instead of simulated time.
    #[arg(long, global = true)]
    realtime: bool,
    /// Gateway data directory (outbox, traces, keys).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive one trip and upload its sealed trace.
    Run {
        #[arg(long)]
        driver: Option<String>,
        #[arg(long)]
        vehicle: Option<String>,
        /// Seconds.
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
        /// Built-in profile name (calm, aggressive) or a TOML profile file.
        #[arg(long)]
        profile: Option<String>,
        /// Keep undeliverable traces here and exit successfully.
        #[arg(long)]
        outbox_dir: Option<PathBuf>,
    },
    /// Back-to-back OBD polling with a trailing-window count per reply.
    BenchObd {
        /// Seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// triangular:MIN,MODE,MAX | uniform:MIN,MAX | fixed:MS
        #[arg(long, value_parser = parse_latency)]
        latency: Option<LatencyModel>,
        /// Per-update series as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Download a trace and re-check it end to end.
    Verify {
        trace_ref: String,
        /// Hex key file; defaults to the configured key.
        #[arg(long)]
        key_file: Option<PathBuf>,
    },
    /// Re-run gap filling and alerts over a trace file.
    Replay {
        /// Plaintext CSV or sealed .fdtl envelope.
        trace: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        key_file: Option<PathBuf>,
    },
    /// Erase stored data.
    Erase {
        #[arg(long, value_enum, default_value_t = ScopeArg::Both)]
        scope: ScopeArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Device,
    Local,
    Both,
}

fn parse_latency(s: &str) -> Result<LatencyModel, String> {
    LatencyModel::parse(s).map_err(|e| e.to_string())
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce(&T) -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
    } else {
        print!("{}", text(value));
    }
}

fn load_config(cli: &Cli) -> Result<Config, StageError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| StageError::new(Stage::Config, e))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.trip.seed = seed;
        cfg.bench.seed = seed;
    }
    if let Some(dir) = &cli.data_dir {
        cfg.gateway.data_dir = dir.clone();
    }
    Ok(cfg)
}

async fn dispatch(cli: Cli) -> Result<bool, StageError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Run {
            driver,
            vehicle,
            duration,
            profile,
            outbox_dir,
        } => {
            if let Some(d) = driver {
                cfg.trip.driver_id = d;
            }
            if let Some(v) = vehicle {
                cfg.trip.vehicle_id = v;
            }
            if let Some(p) = profile {
                if std::path::Path::new(&p).is_file() {
                    cfg.profile.file = Some(p.into());
                } else {
                    cfg.profile.name = p;
                    cfg.profile.file = None;
                }
            }
            let accept_queued = outbox_dir.is_some();
            if outbox_dir.is_some() {
                cfg.gateway.outbox = outbox_dir;
            }
            let opts = RunOptions {
                duration_s: duration,
                self_contained: cli.self_contained,
                realtime: cli.realtime,
                accept_queued,
            };
            let summary = run(&cfg, &opts).await?;
            emit(cli.json, &summary, |s| s.text());
            Ok(true)
        }
        Command::BenchObd { duration, latency, csv } => {
            if let Some(d) = duration {
                cfg.bench.duration_s = d;
            }
            if let Some(l) = latency {
                cfg.bench.latency = l;
            }
            let report: BenchReport = if cli.realtime {
                run_live(&cfg.bench).await
            } else {
                simulate(&cfg.bench)
            }
            .map_err(|e| StageError::new(Stage::Bench, e))?;
            if let Some(path) = csv {
                let bytes = report.to_csv().map_err(|e| StageError::new(Stage::Bench, e))?;
                std::fs::write(path, bytes).map_err(|e| StageError::new(Stage::Bench, e))?;
            }
            #[derive(Serialize)]
            struct Out<'a> {
                #[serde(flatten)]
                report: &'a BenchReport,
                violations: Vec<String>,
            }
            let violations = report.violations();
            let ok = violations.is_empty() && report.error.is_none();
            if cli.json {
                // The per-update series goes to --csv; keep stdout small.
                let mut slim = report.clone();
                slim.updates.clear();
                emit(true, &Out { report: &slim, violations }, |_| String::new());
            } else {
                print!("{}", report.summary());
                for v in &violations {
                    println!("violation: {v}");
                }
            }
            Ok(ok)
        }
        Command::Verify { trace_ref, key_file } => {
            if key_file.is_some() {
                cfg.key.file = key_file;
                cfg.key.hex = None;
            }
            let key = load_or_create_key(&cfg, false)?
                .ok_or_else(|| StageError::new(Stage::Verify, "no trace key configured"))?;
            let server = if cli.self_contained && cfg.cloud.base_url.is_none() {
                Some(spawn_local_cloud(&cfg).await?)
            } else {
                None
            };
            let url = server
                .as_ref()
                .map(|s| s.base_url())
                .or_else(|| cfg.cloud.base_url.clone())
                .ok_or_else(|| StageError::new(Stage::Download, "no cloud base_url configured"))?;
            let report = verify_remote(
                &CloudClient::new(url),
                &cfg.cloud.client_id,
                &cfg.cloud.client_secret,
                &trace_ref,
                &key,
            )
            .await?;
            emit(cli.json, &report, |r| r.text());
            Ok(report.passed())
        }
        Command::Replay {
            trace,
            manifest,
            key_file,
        } => {
            if key_file.is_some() {
                cfg.key.file = key_file;
                cfg.key.hex = None;
            }
            let key = load_or_create_key(&cfg, false)?;
            let (csv, manifest) = load_trace(&trace, manifest.as_deref(), key.as_ref())?;
            let summary = replay(&csv, manifest.as_ref(), &cfg)?;
            emit(cli.json, &summary, |s| s.text());
            Ok(summary.identical != Some(false) && summary.manifest_problems.is_empty())
        }
        Command::Erase { scope } => {
            let scope = match scope {
                ScopeArg::Device => EraseScope::Device,
                ScopeArg::Local => EraseScope::Local,
                ScopeArg::Both => EraseScope::Both,
            };
            let report = erase(&cfg, scope).await?;
            emit(cli.json, &report, |r| {
                format!(
                    "erased {} device samples and {} local files\n",
                    r.device_samples, r.local_files
                )
            });
            Ok(true)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let json = cli.json;
    match dispatch(cli).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if json {
                println!("{}", serde_json::json!({ "error": e }));
            }
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

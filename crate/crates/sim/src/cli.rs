//! The `geofence` command line.
//!
//! Exit codes, shared by every subcommand:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | other failure (server startup, benchmark setup) |
//! | 2 | usage error |
//! | 3 | the server answered with a non-2xx status |
//! | 4 | the server could not be reached |
//! | 5 | file I/O failure |
//! | 6 | malformed input file (config, trajectory, dataset) |

use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geofence_api::{ClientError, HttpClient, RawResponse};
use geofence_core::wire::AddBoxRequest;
use geofence_core::{DeviceError, Distance, GeoPoint, Timestamp};
use thiserror::Error;

use crate::bench::{self, BenchError, BenchOptions};
use crate::config::{ConfigFileError, SimConfig};
use crate::genboxes::{self, DatasetSpec, GenError};
use crate::replay::{Replayer, DEFAULT_START};
use crate::trajectory;

pub const DEFAULT_SERVER_URL: &str = "http://127.0.0.1:8080";

#[derive(Debug, Parser)]
#[command(name = "geofence", version, about = "Restricted-area registry tools")]
pub struct Cli {
    /// Base URL of the box API.
    #[arg(long, global = true, env = "GEOFENCE_SERVER_URL", default_value = DEFAULT_SERVER_URL)]
    pub server_url: String,
    /// key = value configuration file for the device policy and server.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for dataset generation and benchmark sampling.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Write the command's output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the API server until Ctrl-C.
    Serve {
        #[arg(long)]
        bind: Option<SocketAddr>,
        /// Registry snapshot; its audit log is kept beside it.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Register a restricted box from two opposite corners.
    Add {
        #[arg(long, allow_negative_numbers = true)]
        lon1: f64,
        #[arg(long, allow_negative_numbers = true)]
        lat1: f64,
        #[arg(long, allow_negative_numbers = true)]
        lon2: f64,
        #[arg(long, allow_negative_numbers = true)]
        lat2: f64,
        #[arg(long)]
        added_by: String,
        #[arg(long, default_value = "")]
        reason: String,
    },
    /// List boxes whose centroid lies within a radius.
    Fetch {
        #[arg(long, allow_negative_numbers = true)]
        lat: f64,
        #[arg(long, allow_negative_numbers = true)]
        lon: f64,
        #[arg(long, allow_negative_numbers = true)]
        radius_m: f64,
    },
    /// Write a synthetic dataset as a registry snapshot (requires --output).
    Genboxes {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_negative_numbers = true, default_value_t = 40.758)]
        center_lat: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = -73.9855)]
        center_lon: f64,
        #[arg(long, default_value_t = 50.0)]
        radius_miles: f64,
    },
    /// Feed a trajectory through the device state machine against the server.
    Replay {
        trajectory: PathBuf,
        /// Save the final device cache here.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Virtual time of offset zero, in Unix seconds.
        #[arg(long, default_value_t = DEFAULT_START)]
        start: Timestamp,
        /// Start with the network down.
        #[arg(long)]
        offline: bool,
    },
    /// Measure add, fetch and startup latency plus storage per box.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 100_000, 250_000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = bench::DEFAULT_SAMPLES)]
        samples: usize,
        /// Directory for temporary datasets.
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Usage(String),
    #[error("server rejected the request with status {status}")]
    Rejected { status: u16 },
    #[error("cannot reach server: {0}")]
    Transport(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Parse(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Rejected { .. } => 3,
            CliError::Transport(_) => 4,
            CliError::Io(_) => 5,
            CliError::Parse(_) => 6,
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Rejected { status, .. } => CliError::Rejected { status },
            ClientError::Transport(m) => CliError::Transport(m),
            ClientError::Decode(m) => CliError::Parse(m),
        }
    }
}

impl From<ConfigFileError> for CliError {
    fn from(e: ConfigFileError) -> Self {
        match e {
            ConfigFileError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Parse(format!("config: {e}")),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Storage(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DeviceError> for CliError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::Storage(_) => CliError::Io(e.to_string()),
            DeviceError::CorruptSnapshot(_) => CliError::Parse(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::BadSizes | BenchError::BadSamples => CliError::Usage(e.to_string()),
            BenchError::InsufficientSpace { .. } | BenchError::Io(_) => CliError::Io(e.to_string()),
            BenchError::Client(c) => c.into(),
            other => CliError::Failed(other.to_string()),
        }
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut text = text.to_owned();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

/// Prints the response body whatever the status, then fails on non-2xx.
fn emit_response(output: Option<&Path>, resp: RawResponse) -> Result<(), CliError> {
    emit(output, &resp.body)?;
    if (200..300).contains(&resp.status) {
        Ok(())
    } else {
        Err(CliError::Rejected { status: resp.status })
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig, CliError> {
    match path {
        Some(p) => Ok(SimConfig::load(p)?),
        None => Ok(SimConfig::default()),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let output = cli.output.as_deref();
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Serve { bind, snapshot } => {
            let mut api = config.api;
            if let Some(b) = bind {
                api.bind_addr = b;
            }
            if snapshot.is_some() {
                api.snapshot_path = snapshot;
            }
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(e.to_string()))?;
            runtime
                .block_on(geofence_api::serve(api))
                .map_err(|e| CliError::Failed(e.to_string()))
        }
        Command::Add {
            lon1,
            lat1,
            lon2,
            lat2,
            added_by,
            reason,
        } => {
            let client = HttpClient::new(&cli.server_url)?;
            let req = AddBoxRequest {
                lon1,
                lat1,
                lon2,
                lat2,
                added_by,
                reason,
            };
            emit_response(output, client.add_box_raw(&req)?)
        }
        Command::Fetch { lat, lon, radius_m } => {
            let client = HttpClient::new(&cli.server_url)?;
            emit_response(output, client.fetch_raw(lat, lon, radius_m)?)
        }
        Command::Genboxes {
            n,
            center_lat,
            center_lon,
            radius_miles,
        } => {
            let path = output.ok_or_else(|| CliError::Usage("genboxes needs --output".into()))?;
            let center = GeoPoint::new(center_lat, center_lon).map_err(|e| CliError::Usage(e.to_string()))?;
            let radius = Distance::from_miles(radius_miles).map_err(|e| CliError::Usage(e.to_string()))?;
            let spec = DatasetSpec {
                n,
                center,
                radius,
                seed: cli.seed,
            };
            let boxes = genboxes::generate(spec)?;
            let size = genboxes::write_dataset(path, &boxes)?;
            eprintln!(
                "wrote {n} boxes to {} ({size} bytes, {:.1} bytes/box)",
                path.display(),
                size as f64 / n as f64
            );
            Ok(())
        }
        Command::Replay {
            trajectory: path,
            cache,
            start,
            offline,
        } => {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let events = trajectory::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
            let client = HttpClient::new(&cli.server_url)?;
            let mut replayer = Replayer::new(config.policy, client, start)?;
            replayer.set_online(!offline);
            let mut log = replayer.run(&events).join("\n");
            log.push('\n');
            emit(output, &log)?;
            if let Some(cache) = cache {
                replayer.device().state().save(&cache)?;
            }
            Ok(())
        }
        Command::Bench {
            sizes,
            samples,
            work_dir,
        } => {
            let opts = BenchOptions {
                sizes,
                seed: cli.seed,
                samples,
                work_dir,
            };
            let report = bench::run(&opts, |msg| eprintln!("{msg}"))?;
            eprint!("{}", report.to_table());
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            emit(output, &json)
        }
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,geofence_api=info".into()),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

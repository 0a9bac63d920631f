//! Latency and storage benchmark over synthetic datasets.
//!
//! For each dataset size N the registry is bulk-loaded and persisted, then
//! served on loopback:
//!
//! - add: `POST /v1/boxes` round trips. Probes land in a disc disjoint from
//!   the dataset and each is undone (untimed) afterwards, so N stays fixed.
//! - fetch: `GET /v1/boxes` round trips at a 25-mile radius from random
//!   centers inside the dataset disc, including the full body download.
//! - startup: in-process capture checks against a device cache holding all
//!   N boxes.
//!
//! Percentiles use the nearest-rank method.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use geofence_api::{ApiConfig, ClientError, HttpClient};
use geofence_core::registry::{file_len, RegistryError};
use geofence_core::wire::AddBoxRequest;
use geofence_core::{
    haversine_distance, Device, DevicePolicy, Distance, GeoPoint, Registry, RegistryConfig, StorePaths, Timestamp,
    EARTH_RADIUS_M,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genboxes::{self, DatasetSpec, GenError};

pub const DEFAULT_SAMPLES: usize = 100;
/// Disk needed per box: the snapshot, its temporary rewrite and slack.
const DISK_BYTES_PER_BOX: u64 = 800;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sizes must be non-empty, positive and strictly ascending")]
    BadSizes,
    #[error("samples must be positive")]
    BadSamples,
    #[error("insufficient disk space in {dir}: need {needed} bytes, {available} available")]
    InsufficientSpace { dir: String, needed: u64, available: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("unexpected response status {0}")]
    Status(u16),
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub samples: usize,
    /// Where datasets are written; the system temp dir if `None`.
    pub work_dir: Option<PathBuf>,
}

impl BenchOptions {
    pub fn new(sizes: Vec<usize>, seed: u64) -> Self {
        Self {
            sizes,
            seed,
            samples: DEFAULT_SAMPLES,
            work_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    /// Nearest-rank median and 95th percentile. `samples_ms` must be non-empty.
    pub fn from_samples(samples_ms: &mut [f64]) -> Self {
        assert!(!samples_ms.is_empty(), "no samples");
        samples_ms.sort_by(f64::total_cmp);
        let rank = |q: f64| {
            let k = (q * samples_ms.len() as f64).ceil() as usize;
            samples_ms[k.clamp(1, samples_ms.len()) - 1]
        };
        Self {
            median_ms: rank(0.5),
            p95_ms: rank(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub add: LatencyStats,
    pub fetch: LatencyStats,
    pub startup: LatencyStats,
    pub bytes_per_box: f64,
    /// Mean number of boxes returned per fetch.
    pub fetch_boxes_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub samples: usize,
    pub sizes: Vec<usize>,
    pub rows: Vec<BenchRow>,
}

/// The orderings the latency figures are expected to show.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orderings {
    pub add_nondecreasing: bool,
    pub fetch_within_add: bool,
    pub startup_nondecreasing: bool,
}

impl Orderings {
    pub fn all(&self) -> bool {
        self.add_nondecreasing && self.fetch_within_add && self.startup_nondecreasing
    }
}

impl BenchReport {
    pub fn orderings(&self) -> Orderings {
        let nondecreasing = |f: fn(&BenchRow) -> f64| self.rows.windows(2).all(|w| f(&w[0]) <= f(&w[1]));
        Orderings {
            add_nondecreasing: nondecreasing(|r| r.add.median_ms),
            fetch_within_add: self.rows.iter().all(|r| r.fetch.median_ms <= r.add.median_ms),
            startup_nondecreasing: nondecreasing(|r| r.startup.median_ms),
        }
    }

    /// Structural checks: sizes as requested and ascending, latencies
    /// positive, p95 no lower than the median.
    pub fn is_consistent(&self) -> bool {
        let ns: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        ns == self.sizes
            && ns.windows(2).all(|w| w[0] < w[1])
            && self.rows.iter().all(|r| {
                [r.add, r.fetch, r.startup]
                    .iter()
                    .all(|s| s.median_ms > 0.0 && s.p95_ms >= s.median_ms)
            })
    }

    pub fn to_table(&self) -> String {
        let header = [
            "N",
            "add p50 ms",
            "add p95 ms",
            "fetch p50 ms",
            "fetch p95 ms",
            "startup p50 ms",
            "startup p95 ms",
            "bytes/box",
            "boxes/fetch",
        ];
        let rows: Vec<[String; 9]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.n.to_string(),
                    format!("{:.3}", r.add.median_ms),
                    format!("{:.3}", r.add.p95_ms),
                    format!("{:.3}", r.fetch.median_ms),
                    format!("{:.3}", r.fetch.p95_ms),
                    format!("{:.4}", r.startup.median_ms),
                    format!("{:.4}", r.startup.p95_ms),
                    format!("{:.1}", r.bytes_per_box),
                    format!("{:.0}", r.fetch_boxes_mean),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let mut line = |cells: &mut dyn Iterator<Item = &str>| {
            let padded: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", padded.join("  "));
        };
        line(&mut header.iter().copied());
        for r in &rows {
            line(&mut r.iter().map(String::as_str));
        }
        out
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Uniform random point in the spherical cap of `radius` around `center`.
fn random_in_disc(rng: &mut ChaCha8Rng, center: GeoPoint, radius: Distance) -> GeoPoint {
    let angular = radius.meters() / EARTH_RADIUS_M;
    let u: f64 = rng.random();
    let d = (1.0 - u * (1.0 - angular.cos())).acos();
    let bearing = rng.random_range(0.0..std::f64::consts::TAU);
    offset(center, bearing, d * EARTH_RADIUS_M)
}

fn offset(origin: GeoPoint, bearing: f64, meters: f64) -> GeoPoint {
    let (lat, lon) = genboxes::destination(origin, bearing, meters);
    GeoPoint::new(lat, lon).expect("offset stays in range")
}

fn check_space(dir: &Path, max_n: usize) -> Result<(), BenchError> {
    let needed = DISK_BYTES_PER_BOX.saturating_mul(max_n as u64);
    let available = fs2::available_space(dir)?;
    if available < needed {
        return Err(BenchError::InsufficientSpace {
            dir: dir.display().to_string(),
            needed,
            available,
        });
    }
    Ok(())
}

pub fn run(opts: &BenchOptions, mut progress: impl FnMut(&str)) -> Result<BenchReport, BenchError> {
    if opts.sizes.is_empty() || opts.sizes[0] == 0 || opts.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::BadSizes);
    }
    if opts.samples == 0 {
        return Err(BenchError::BadSamples);
    }
    let base = opts.work_dir.clone().unwrap_or_else(std::env::temp_dir);
    check_space(&base, *opts.sizes.last().expect("sizes non-empty"))?;

    let mut rows = Vec::with_capacity(opts.sizes.len());
    for &n in &opts.sizes {
        progress(&format!("N={n}: generating"));
        rows.push(run_one(n, opts, &base, &mut progress)?);
    }
    Ok(BenchReport {
        seed: opts.seed,
        samples: opts.samples,
        sizes: opts.sizes.clone(),
        rows,
    })
}

fn run_one(n: usize, opts: &BenchOptions, base: &Path, progress: &mut impl FnMut(&str)) -> Result<BenchRow, BenchError> {
    let spec = DatasetSpec::new(n, opts.seed);
    let boxes = genboxes::generate(spec)?;
    let dir = tempfile::Builder::new().prefix("geofence-bench").tempdir_in(base)?;
    let snapshot = dir.path().join("boxes.snap");
    let registry = Registry::open(RegistryConfig {
        store: Some(StorePaths::beside(&snapshot)),
        id_seed: Some(opts.seed),
        ..RegistryConfig::default()
    })?;
    registry.import(boxes.clone())?;
    let bytes_per_box = file_len(&snapshot) as f64 / n as f64;

    let registry = Arc::new(registry);
    let config = ApiConfig {
        bind_addr: "127.0.0.1:0".parse().expect("loopback address"),
        ..ApiConfig::default()
    };
    let server = geofence_api::spawn(registry.clone(), &config)?;
    let client = HttpClient::new(&server.url())?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (n as u64).rotate_left(32));
    let fetch_radius = Distance::from_miles(25.0).expect("valid radius");

    // connection setup and first-touch costs stay out of the samples
    for _ in 0..3 {
        client.fetch_raw(spec.center.lat(), spec.center.lon(), fetch_radius.meters())?;
    }

    progress(&format!("N={n}: add"));
    let probe_center = offset(spec.center, std::f64::consts::FRAC_PI_2, 3.0 * spec.radius.meters());
    let mut add_ms = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        let p = random_in_disc(&mut rng, probe_center, spec.radius);
        let dlat = rng.random_range(genboxes::MIN_EDGE_M..=genboxes::MAX_EDGE_M) / EARTH_RADIUS_M;
        let dlon = rng.random_range(genboxes::MIN_EDGE_M..=genboxes::MAX_EDGE_M)
            / (EARTH_RADIUS_M * p.lat().to_radians().cos());
        let req = AddBoxRequest {
            lon1: p.lon(),
            lat1: p.lat(),
            lon2: p.lon() + dlon.to_degrees(),
            lat2: p.lat() + dlat.to_degrees(),
            added_by: "bench".into(),
            reason: "probe".into(),
        };
        let start = Instant::now();
        let resp = client.add_box_raw(&req)?;
        add_ms.push(elapsed_ms(start));
        if resp.status != 201 {
            return Err(BenchError::Status(resp.status));
        }
        registry.undo_last_add()?;
    }

    progress(&format!("N={n}: fetch"));
    let mut fetch_ms = Vec::with_capacity(opts.samples);
    let mut fetched = 0usize;
    for _ in 0..opts.samples {
        let c = random_in_disc(&mut rng, spec.center, spec.radius);
        let start = Instant::now();
        let resp = client.fetch_raw(c.lat(), c.lon(), fetch_radius.meters())?;
        fetch_ms.push(elapsed_ms(start));
        if resp.status != 200 {
            return Err(BenchError::Status(resp.status));
        }
        fetched += count_of(&resp.body);
    }
    drop(server);

    progress(&format!("N={n}: startup"));
    let now: Timestamp = genboxes::CREATED_AT;
    let mut device = Device::new(DevicePolicy::default()).expect("default policy is valid");
    device.apply_refresh(boxes, spec.center, spec.radius, now);
    let mut startup_ms = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        let fix = random_in_disc(&mut rng, spec.center, spec.radius);
        debug_assert!(haversine_distance(spec.center, fix) <= spec.radius);
        let start = Instant::now();
        let decision = device.capture_request(now, fix);
        startup_ms.push(elapsed_ms(start));
        std::hint::black_box(decision);
    }

    Ok(BenchRow {
        n,
        add: LatencyStats::from_samples(&mut add_ms),
        fetch: LatencyStats::from_samples(&mut fetch_ms),
        startup: LatencyStats::from_samples(&mut startup_ms),
        bytes_per_box,
        fetch_boxes_mean: fetched as f64 / opts.samples as f64,
    })
}

/// The `count` field of a fetch response; the body ends with it.
fn count_of(body: &str) -> usize {
    body.rsplit_once("\"count\":")
        .and_then(|(_, tail)| tail.trim_end_matches('}').trim().parse().ok())
        .unwrap_or(0)
}

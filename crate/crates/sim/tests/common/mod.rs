//! Drive-through scenario shared by the integration and acceptance suites.
//!
//! A device starts in Manhattan next to box A, photographs outside it, inside
//! it and just beyond its edge, then drives east on Long Island. Box B is
//! registered on the server after the drive starts; the device only learns of
//! it once a refresh centered within 25 miles of B's centroid runs.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use geofence_api::{spawn_with_clock, ApiConfig, HttpClient, ServerHandle};
use geofence_core::wire::AddBoxRequest;
use geofence_core::{BoxId, DevicePolicy, Registry, RegistryConfig};
use geofence_sim::replay::{Replayer, DEFAULT_START};
use geofence_sim::trajectory::TrajectoryEvent;

pub const SERVER_NOW: i64 = 1_700_000_000;

pub const BOX_A: [f64; 4] = [-73.995, 40.745, -73.985, 40.755];
pub const BOX_B: [f64; 4] = [-72.505, 40.795, -72.495, 40.805];

pub fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/e2e_replay.log")
}

pub fn start_server(id_seed: u64) -> (ServerHandle, HttpClient) {
    let registry = Registry::open(RegistryConfig {
        id_seed: Some(id_seed),
        ..RegistryConfig::default()
    })
    .unwrap();
    let config = ApiConfig {
        bind_addr: "127.0.0.1:0".parse().unwrap(),
        ..ApiConfig::default()
    };
    let server = spawn_with_clock(Arc::new(registry), &config, Arc::new(|| SERVER_NOW)).unwrap();
    let client = HttpClient::new(&server.url()).unwrap();
    (server, client)
}

pub fn add(client: &HttpClient, e: [f64; 4], reason: &str) -> BoxId {
    let resp = client
        .add_box(&AddBoxRequest {
            lon1: e[0],
            lat1: e[1],
            lon2: e[2],
            lat2: e[3],
            added_by: "scenario".into(),
            reason: reason.into(),
        })
        .unwrap();
    resp.stored.id
}

fn fix(t: i64, lat: f64, lon: f64) -> TrajectoryEvent {
    TrajectoryEvent::fix(t, lat, lon).unwrap()
}

/// Events before box B exists on the server.
pub fn opening() -> Vec<TrajectoryEvent> {
    vec![
        fix(0, 40.70, -74.00),
        TrajectoryEvent::capture(30),
        fix(60, 40.75, -73.99),
        TrajectoryEvent::capture(90),
        // about 300 m north of A's top edge
        fix(120, 40.7577, -73.99),
        TrajectoryEvent::capture(150),
    ]
}

/// The drive east, after box B is registered.
pub fn drive() -> Vec<TrajectoryEvent> {
    let mut events = Vec::new();
    let mut t = 300;
    for step in 1..=15 {
        let lon = -73.99 + 0.1 * step as f64 - if step == 15 { 0.01 } else { 0.0 };
        let lon = (lon * 100.0).round() / 100.0;
        let lat = if step == 15 { 40.80 } else { 40.78 };
        events.push(fix(t, lat, lon));
        t += 30;
        match step {
            5 => {
                events.push(TrajectoryEvent::net_down(t));
                t += 30;
            }
            6 => {
                events.push(TrajectoryEvent::capture(t));
                t += 30;
                events.push(TrajectoryEvent::net_up(t));
                t += 30;
            }
            15 => {
                events.push(TrajectoryEvent::capture(t));
                t += 30;
            }
            _ => {}
        }
        t += 270;
    }
    events
}

pub struct Transcript {
    pub lines: Vec<String>,
    pub box_a: BoxId,
    pub box_b: BoxId,
    /// Index in `lines` of the marker for B's registration.
    pub b_added_at: usize,
}

impl Transcript {
    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

pub fn run_scenario() -> Transcript {
    let (_server, client) = start_server(42);
    let box_a = add(&client, BOX_A, "stadium");
    let mut lines = vec![format!("server add box={box_a}")];
    let mut replayer = Replayer::new(DevicePolicy::default(), client.clone(), DEFAULT_START).unwrap();
    lines.extend(replayer.run(&opening()));
    let box_b = add(&client, BOX_B, "airfield");
    let b_added_at = lines.len();
    lines.push(format!("server add box={box_b}"));
    lines.extend(replayer.run(&drive()));
    Transcript {
        lines,
        box_a,
        box_b,
        b_added_at,
    }
}

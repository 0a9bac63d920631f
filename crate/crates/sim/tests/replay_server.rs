mod common;

use common::{run_scenario, BOX_B};
use geofence_core::{haversine_distance, BoxExtent, DevicePolicy, Distance, GeoPoint};
use geofence_sim::replay::{Replayer, DEFAULT_START};
use geofence_sim::trajectory::{EventKind, TrajectoryEvent};

fn line_at(lines: &[String], t: i64, kind: &str) -> String {
    let prefix = format!("t={t} {kind}");
    lines
        .iter()
        .find(|l| l.starts_with(&prefix))
        .unwrap_or_else(|| panic!("no {kind} line at t={t}"))
        .clone()
}

#[test]
fn captures_outside_inside_and_near_a_box() {
    let tr = run_scenario();
    assert_eq!(line_at(&tr.lines, 30, "capture"), "t=30 capture allowed");
    assert_eq!(
        line_at(&tr.lines, 90, "capture"),
        format!("t=90 capture denied restricted_area box={} distance_m=0.0", tr.box_a)
    );
    let near = line_at(&tr.lines, 150, "capture");
    let prefix = format!("t=150 capture denied restricted_area box={} distance_m=", tr.box_a);
    let d: f64 = near.strip_prefix(&prefix).expect(&near).parse().unwrap();
    assert!(d > 0.0 && d <= 500.0, "{near}");
}

#[test]
fn box_added_mid_journey_arrives_with_first_refresh_in_range() {
    let tr = run_scenario();
    let b = tr.box_b.to_string();
    let centroid = BoxExtent::new(BOX_B[0], BOX_B[1], BOX_B[2], BOX_B[3]).unwrap().centroid();
    let radius = DevicePolicy::default().fetch_radius;
    let first = tr
        .lines
        .iter()
        .position(|l| l.contains("refresh=ok") && l.split(" added=[").nth(1).is_some_and(|r| r.contains(&b)))
        .expect("box B never reached the cache");
    assert!(first > tr.b_added_at);
    // every earlier refresh was centered too far away to include B
    let fixes: Vec<(usize, GeoPoint)> = tr
        .lines
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            let rest = l.split(" fix lat=").nth(1)?;
            let (lat, rest) = rest.split_once(" lon=")?;
            let lon = rest.split_whitespace().next()?;
            Some((i, GeoPoint::new(lat.parse().ok()?, lon.parse().ok()?).ok()?))
        })
        .collect();
    let at_first = fixes.iter().find(|(i, _)| *i == first).unwrap().1;
    assert!(haversine_distance(at_first, centroid) <= Distance::from_meters(radius.meters() + 1_000.0).unwrap());
    let last = tr.lines.last().unwrap();
    assert!(last.ends_with(&format!(" capture denied restricted_area box={b} distance_m=0.0")), "{last}");
}

#[test]
fn outage_defers_then_retries() {
    let tr = run_scenario();
    let deferred = tr.lines.iter().position(|l| l.ends_with("refresh=deferred_offline")).unwrap();
    let retried = tr.lines.iter().position(|l| l.contains("net_up pending=moved refresh=ok")).unwrap();
    assert!(deferred < retried);
}

#[test]
fn replays_are_byte_identical() {
    assert_eq!(run_scenario().text(), run_scenario().text());
}

#[test]
fn network_down_throughout_denies_every_capture() {
    // nothing listens on this port once the server is gone
    let url = {
        let (server, _client) = common::start_server(1);
        server.url()
    };
    let client = geofence_api::HttpClient::new(&url).unwrap();
    let mut events = vec![TrajectoryEvent::fix(0, 40.7, -74.0).unwrap()];
    for i in 1..50 {
        events.push(if i % 2 == 0 {
            TrajectoryEvent::capture(i * 60)
        } else {
            TrajectoryEvent::fix(i * 60, 40.7 + i as f64 * 0.01, -74.0).unwrap()
        });
    }
    for offline in [true, false] {
        let mut r = Replayer::new(DevicePolicy::default(), client.clone(), DEFAULT_START).unwrap();
        r.set_online(!offline);
        let log = r.run(&events);
        for (e, line) in events.iter().zip(&log) {
            if matches!(e.kind, EventKind::Capture) {
                assert!(line.ends_with("capture denied no_coverage"), "{line}");
            }
        }
    }
}

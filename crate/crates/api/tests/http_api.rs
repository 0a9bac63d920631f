use std::sync::Arc;

use geofence_api::{spawn, spawn_with_clock, ApiConfig, ClientError, HttpClient, ServerHandle};
use geofence_core::wire::{codes, AddBoxRequest, ErrorBody, FetchResponse, WireBox};
use geofence_core::{
    BoxExtent, BoxSource, Distance, FetchError, GeoPoint, Registry, RegistryConfig, RestrictedBox, StorePaths,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NOW: i64 = 1_700_000_000;

fn local_config() -> ApiConfig {
    ApiConfig {
        bind_addr: "127.0.0.1:0".parse().unwrap(),
        ..ApiConfig::default()
    }
}

fn start(registry: Registry) -> (ServerHandle, HttpClient, Arc<Registry>) {
    let registry = Arc::new(registry);
    let server = spawn_with_clock(registry.clone(), &local_config(), Arc::new(|| NOW)).unwrap();
    let client = HttpClient::new(&server.url()).unwrap();
    (server, client, registry)
}

fn req(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> AddBoxRequest {
    AddBoxRequest {
        lon1,
        lat1,
        lon2,
        lat2,
        added_by: "ops".into(),
        reason: "test".into(),
    }
}

fn error_code(body: &str) -> String {
    serde_json::from_str::<ErrorBody>(body).unwrap().error
}

#[test]
fn add_returns_created_with_normalized_box() {
    let (_server, client, registry) = start(Registry::in_memory());
    let resp = client.add_box_raw(&req(-73.98, 40.76, -73.99, 40.75)).unwrap();
    assert_eq!(resp.status, 201);
    let body: geofence_core::wire::AddResponse = serde_json::from_str(&resp.body).unwrap();
    assert_eq!(
        [body.stored.min_lon, body.stored.min_lat, body.stored.max_lon, body.stored.max_lat],
        [-73.99, 40.75, -73.98, 40.76]
    );
    assert!(body.replaced_ids.is_empty());
    assert_eq!(body.stored.created_at, NOW);
    assert_eq!(registry.count(), 1);
}

#[test]
fn out_of_range_latitude_is_rejected() {
    let (_server, client, registry) = start(Registry::in_memory());
    let resp = client.add_box_raw(&req(10.0, 95.0, 11.0, 1.0)).unwrap();
    assert_eq!(resp.status, 400);
    assert_eq!(error_code(&resp.body), codes::INVALID_COORDINATE);
    assert_eq!(registry.count(), 0);
}

#[test]
fn bridging_box_reports_both_replaced_ids() {
    let (_server, client, registry) = start(Registry::in_memory());
    client.add_box(&req(0.0, 0.0, 1.0, 1.0)).unwrap();
    client.add_box(&req(2.0, 0.0, 3.0, 1.0)).unwrap();
    let resp = client.add_box(&req(0.5, 0.5, 2.5, 0.6)).unwrap();
    assert_eq!(resp.replaced_ids.len(), 2);
    assert_eq!(
        [resp.stored.min_lon, resp.stored.min_lat, resp.stored.max_lon, resp.stored.max_lat],
        [0.0, 0.0, 3.0, 1.0]
    );
    assert_eq!(registry.count(), 1);
}

#[test]
fn antimeridian_box_is_unprocessable() {
    let (_server, client, _r) = start(Registry::in_memory());
    let resp = client.add_box_raw(&req(179.5, 0.0, -179.5, 1.0)).unwrap();
    assert_eq!(resp.status, 422);
    assert_eq!(error_code(&resp.body), codes::ANTIMERIDIAN_UNSUPPORTED);
}

#[test]
fn oversized_body_is_rejected_with_json_error() {
    let (_server, client, registry) = start(Registry::in_memory());
    let mut r = req(0.0, 0.0, 1.0, 1.0);
    r.reason = "x".repeat(20 * 1024);
    let resp = client.add_box_raw(&r).unwrap();
    assert_eq!(resp.status, 413);
    assert_eq!(error_code(&resp.body), codes::PAYLOAD_TOO_LARGE);
    assert_eq!(registry.count(), 0);
}

#[test]
fn malformed_bodies_never_mutate_or_crash() {
    let (_server, client, registry) = start(Registry::in_memory());
    let bodies: Vec<Vec<u8>> = vec![
        b"".to_vec(),
        b"{".to_vec(),
        b"null".to_vec(),
        b"[1,2,3]".to_vec(),
        br#"{"lon1":0,"lat1":0,"lon2":1}"#.to_vec(),
        br#"{"lon1":"a","lat1":0,"lon2":1,"lat2":1,"added_by":"x","reason":""}"#.to_vec(),
        br#"{"lon1":0,"lat1":0,"lon2":1,"lat2":1,"added_by":"x","reason":"","extra":1}"#.to_vec(),
        vec![0xff, 0xfe, 0x00],
    ];
    for body in bodies {
        let resp = client.post_raw(body.clone()).unwrap();
        assert_eq!(resp.status, 400, "body {body:?}");
        assert_eq!(error_code(&resp.body), codes::MALFORMED_REQUEST);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let len = rng.random_range(0..64);
        let body: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let resp = client.post_raw(body).unwrap();
        assert_eq!(resp.status, 400);
    }
    // empty added_by parses but is refused by the registry
    let mut r = req(0.0, 0.0, 1.0, 1.0);
    r.added_by.clear();
    let resp = client.add_box_raw(&r).unwrap();
    assert_eq!(resp.status, 400);
    assert_eq!(error_code(&resp.body), codes::INVALID_REQUEST);
    assert_eq!(registry.count(), 0);
}

#[test]
fn storage_failure_is_500_and_leaves_registry_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = dir.path().join("boxes.snap");
    let registry = Registry::open(RegistryConfig {
        store: Some(StorePaths::beside(&snapshot)),
        ..RegistryConfig::default()
    })
    .unwrap();
    let (_server, client, registry) = start(registry);
    client.add_box(&req(0.0, 0.0, 1.0, 1.0)).unwrap();
    std::fs::create_dir(dir.path().join("boxes.snap.tmp")).unwrap();
    let resp = client.add_box_raw(&req(5.0, 5.0, 6.0, 6.0)).unwrap();
    assert_eq!(resp.status, 500);
    assert_eq!(error_code(&resp.body), codes::STORAGE_FAILURE);
    assert_eq!(registry.count(), 1);
}

#[test]
fn fetch_validates_parameters() {
    let (_server, client, _r) = start(Registry::in_memory());
    let cases = [
        ("lat=1&lon=1&radius_m=0", codes::INVALID_PARAMETER),
        ("lat=1&lon=1&radius_m=-5", codes::INVALID_PARAMETER),
        ("lat=1&lon=1&radius_m=inf", codes::INVALID_PARAMETER),
        ("lat=1&lon=1", codes::INVALID_PARAMETER),
        ("lat=abc&lon=1&radius_m=10", codes::INVALID_PARAMETER),
        ("lat=91&lon=1&radius_m=10", codes::INVALID_COORDINATE),
        ("lat=1&lon=181&radius_m=10", codes::INVALID_COORDINATE),
        ("lat=1&lon=1&radius_m=200000.5", codes::RADIUS_TOO_LARGE),
    ];
    for (query, code) in cases {
        let resp = client.get_raw(query).unwrap();
        assert_eq!(resp.status, 400, "{query}");
        assert_eq!(error_code(&resp.body), code, "{query}");
    }
    assert_eq!(client.get_raw("lat=1&lon=1&radius_m=200000").unwrap().status, 200);
}

#[test]
fn empty_registry_returns_empty_list() {
    let (_server, client, _r) = start(Registry::in_memory());
    let resp = client.fetch_raw(40.0, -74.0, 10_000.0).unwrap();
    assert_eq!(resp.status, 200);
    let body: serde_json::Value = serde_json::from_str(&resp.body).unwrap();
    assert_eq!(body, serde_json::json!({"boxes": [], "count": 0}));
}

#[test]
fn fetch_selects_by_centroid_radius() {
    let (_server, client, registry) = start(Registry::in_memory());
    let origin = GeoPoint::new(40.0, -100.0).unwrap();
    // centroid 10 miles north of origin
    let dlat = 16_093.44 / 6_371_000.0f64;
    let c = 40.0 + dlat.to_degrees();
    let e = BoxExtent::new(-100.001, c - 0.001, -99.999, c + 0.001).unwrap();
    registry.add_box(e, "ops", "", NOW).unwrap();

    let near = client.fetch(origin, Distance::from_miles(25.0).unwrap()).unwrap();
    assert_eq!(near.count, 1);
    assert_eq!(near.boxes.len(), 1);
    let far = client.fetch(origin, Distance::from_miles(5.0).unwrap()).unwrap();
    assert_eq!(far.count, 0);
}

fn sorted(mut v: Vec<WireBox>) -> Vec<WireBox> {
    v.sort_by_key(|b| b.id);
    v
}

#[test]
fn http_adds_match_direct_registry_calls() {
    let seeded = || {
        Registry::open(RegistryConfig {
            id_seed: Some(99),
            ..RegistryConfig::default()
        })
        .unwrap()
    };
    let direct = seeded();
    let (_server, client, served) = start(seeded());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..150 {
        let lon = rng.random_range(-1.0..1.0);
        let lat = rng.random_range(-1.0..1.0);
        let r = req(lon, lat, lon + rng.random_range(-0.2..0.2), lat + rng.random_range(-0.2..0.2));
        let via_http = client.add_box(&r).unwrap();
        let extent = geofence_core::normalize_box(
            GeoPoint::new(r.lat1, r.lon1).unwrap(),
            GeoPoint::new(r.lat2, r.lon2).unwrap(),
        )
        .unwrap();
        let local = direct.add_box(extent, &r.added_by, &r.reason, NOW).unwrap();
        assert_eq!(via_http.stored, WireBox::from(&local.stored));
        let mut a = via_http.replaced_ids.clone();
        let mut b = local.replaced_ids.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
    let all = |r: &Registry| sorted(r.all_boxes().iter().map(WireBox::from).collect());
    assert_eq!(all(&direct), all(&served));

    for _ in 0..50 {
        let center = GeoPoint::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)).unwrap();
        let radius = Distance::from_meters(rng.random_range(1.0..150_000.0)).unwrap();
        let got: FetchResponse = client.fetch(center, radius).unwrap();
        let want: Vec<WireBox> = direct
            .boxes_within_radius(center, radius)
            .unwrap()
            .iter()
            .map(WireBox::from)
            .collect();
        assert_eq!(got.count, want.len());
        assert_eq!(sorted(got.boxes), sorted(want));
    }
}

#[test]
fn box_source_returns_field_identical_boxes() {
    let (_server, client, registry) = start(Registry::in_memory());
    let a = registry
        .add_box(BoxExtent::new(0.1, 0.1, 0.10001, 0.10003).unwrap(), "a", "first", NOW)
        .unwrap()
        .stored;
    let b = registry
        .add_box(BoxExtent::new(0.2, 0.2, 0.2 + 1e-7, 0.2 + 3e-7).unwrap(), "b", "second", NOW + 1)
        .unwrap()
        .stored;
    let mut got = client
        .fetch_boxes(GeoPoint::new(0.15, 0.15).unwrap(), Distance::from_meters(50_000.0).unwrap())
        .unwrap();
    got.sort_by_key(RestrictedBox::id);
    let mut want = vec![a, b];
    want.sort_by_key(RestrictedBox::id);
    assert_eq!(got, want);
}

#[test]
fn box_source_maps_failures() {
    let (server, client, _r) = start(Registry::in_memory());
    let too_far = Distance::from_meters(500_000.0).unwrap();
    let err = client.fetch_boxes(GeoPoint::new(0.0, 0.0).unwrap(), too_far).unwrap_err();
    assert_eq!(err, FetchError::ServerRejected(400));

    let url = server.url();
    server.shutdown().unwrap();
    let gone = HttpClient::new(&url).unwrap();
    let err = gone
        .fetch_boxes(GeoPoint::new(0.0, 0.0).unwrap(), Distance::from_meters(10.0).unwrap())
        .unwrap_err();
    assert!(matches!(err, FetchError::FetchFailed(_)), "{err:?}");
    assert!(matches!(gone.add_box(&req(0.0, 0.0, 1.0, 1.0)), Err(ClientError::Transport(_))));
}

#[test]
fn default_clock_stamps_current_time() {
    let registry = Arc::new(Registry::in_memory());
    let server = spawn(registry, &local_config()).unwrap();
    let client = HttpClient::new(&server.url()).unwrap();
    let stored = client.add_box(&req(0.0, 0.0, 1.0, 1.0)).unwrap().stored;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap()
        .as_secs() as i64;
    assert!((now - stored.created_at).abs() <= 5);
}

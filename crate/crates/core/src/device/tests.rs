use super::*;
use crate::geo::BoxExtent;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HOUR: i64 = 3_600;
const DAY: i64 = 86_400;

fn pt(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

fn rbox(id: u128, e: [f64; 4]) -> RestrictedBox {
    RestrictedBox::new(BoxId::from_u128(id), BoxExtent::new(e[0], e[1], e[2], e[3]).unwrap(), "t", "", 0)
}

/// Point due north of `origin` whose haversine distance is the largest
/// double-precision value not exceeding `meters`.
fn north_of(origin: GeoPoint, meters: f64) -> GeoPoint {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if haversine_distance(origin, pt(origin.lat() + mid, origin.lon())).meters() <= meters {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    pt(origin.lat() + lo, origin.lon())
}

fn refreshed(boxes: Vec<RestrictedBox>, at: GeoPoint, now: i64) -> Device {
    let mut d = Device::new(DevicePolicy::default()).unwrap();
    d.tick(now, at);
    let radius = d.policy().fetch_radius;
    d.apply_refresh(boxes, at, radius, now);
    d
}

#[test]
fn default_policy_values() {
    let p = DevicePolicy::default();
    assert_eq!(p.poll_interval_s, 600);
    assert_eq!(p.movement_threshold.meters(), 1_609.344);
    assert_eq!(p.fetch_radius.meters(), 40_233.6);
    assert_eq!(p.stale_after_s, 86_400);
    assert_eq!(p.lockout_after_s, 2_592_000);
    assert_eq!(p.permissible_distance.meters(), 500.0);
    p.validate().unwrap();
}

#[test]
fn invalid_policies_rejected() {
    let mut p = DevicePolicy::default();
    p.lockout_after_s = p.stale_after_s;
    assert!(Device::new(p).is_err());

    let mut p = DevicePolicy::default();
    p.fetch_radius = p.movement_threshold;
    assert!(Device::new(p).is_err());

    let p = DevicePolicy {
        permissible_distance: Distance::ZERO,
        ..DevicePolicy::default()
    };
    assert!(Device::new(p).is_err());
}

#[test]
fn first_tick_requests_first_run() {
    let mut d = Device::new(DevicePolicy::default()).unwrap();
    assert_eq!(d.tick(0, pt(40.0, -74.0)), Some(RefreshReason::FirstRun));
    // still no refresh, so the trigger persists
    assert_eq!(d.tick(600, pt(40.0, -74.0)), Some(RefreshReason::FirstRun));
}

#[test]
fn tick_examples() {
    let home = pt(40.0, -74.0);

    let mut d = refreshed(vec![], home, 0);
    assert_eq!(d.tick(HOUR, north_of(home, 2_500.0)), Some(RefreshReason::Moved));

    let mut d = refreshed(vec![], home, 0);
    assert_eq!(d.tick(HOUR, north_of(home, 800.0)), None);

    let mut d = refreshed(vec![], home, 0);
    assert_eq!(d.tick(25 * HOUR, home), Some(RefreshReason::Stale24h));

    let mut d = refreshed(vec![], home, 0);
    assert_eq!(d.tick(HOUR, north_of(home, 41_000.0)), Some(RefreshReason::LeftCoverage));
}

#[test]
fn trigger_priority() {
    let home = pt(40.0, -74.0);
    // stale and moved at once: stale wins
    let mut d = refreshed(vec![], home, 0);
    assert_eq!(d.tick(25 * HOUR, north_of(home, 5_000.0)), Some(RefreshReason::Stale24h));
    // left coverage beats stale
    let mut d = refreshed(vec![], home, 0);
    assert_eq!(d.tick(25 * HOUR, north_of(home, 50_000.0)), Some(RefreshReason::LeftCoverage));
}

#[test]
fn movement_boundary_is_strict() {
    let home = pt(40.0, -74.0);
    let t = DevicePolicy::default().movement_threshold.meters();

    let at = north_of(home, t);
    assert!((haversine_distance(home, at).meters() - t).abs() < 1e-6);
    let mut d = refreshed(vec![], home, 0);
    assert_eq!(d.tick(600, at), None);

    let mut d = refreshed(vec![], home, 0);
    assert_eq!(d.tick(600, north_of(home, t + 1.0)), Some(RefreshReason::Moved));

    let mut d = refreshed(vec![], home, 0);
    assert_eq!(d.tick(600, north_of(home, t - 1.0)), None);
}

#[test]
fn staleness_boundary_is_strict() {
    let home = pt(40.0, -74.0);
    for (age, want) in [
        (DAY - 1, None),
        (DAY, None),
        (DAY + 1, Some(RefreshReason::Stale24h)),
    ] {
        let mut d = refreshed(vec![], home, 1_000);
        assert_eq!(d.tick(1_000 + age, home), want, "age {age}");
    }
}

#[test]
fn tick_keeps_a_single_fix() {
    let mut d = refreshed(vec![], pt(40.0, -74.0), 0);
    for i in 0..50 {
        let fix = pt(40.0 + i as f64 * 1e-3, -74.0);
        d.tick(i * 600, fix);
        assert_eq!(d.state().last_location(), Some(fix));
        assert_eq!(d.state().last_location_at(), Some(i * 600));
    }
}

#[test]
fn refresh_replaces_cache() {
    let home = pt(40.0, -74.0);
    let mut d = Device::new(DevicePolicy::default()).unwrap();
    let r = d.policy().fetch_radius;

    d.apply_refresh(vec![], home, r, 10);
    assert!(d.state().cache().is_empty());
    assert_eq!(d.state().coverage_center(), Some(home));
    assert_eq!(d.state().coverage_radius(), r);
    assert_eq!(d.state().last_refresh_at(), Some(10));

    let three: Vec<_> = (0..3).map(|i| rbox(i, [0.0, 0.0, 1.0, 1.0])).collect();
    d.apply_refresh(three.clone(), home, r, 20);
    assert_eq!(d.state().cache(), &three[..]);

    let other = vec![rbox(9, [2.0, 2.0, 3.0, 3.0])];
    d.apply_refresh(other.clone(), home, r, 30);
    assert_eq!(d.state().cache(), &other[..]);
}

struct Fixed(Result<Vec<RestrictedBox>, FetchError>);

impl BoxSource for Fixed {
    fn fetch_boxes(&self, _: GeoPoint, _: Distance) -> Result<Vec<RestrictedBox>, FetchError> {
        self.0.clone()
    }
}

#[test]
fn refresh_uses_snapped_center() {
    let mut d = Device::new(DevicePolicy::default()).unwrap();
    d.tick(0, pt(40.123456, -74.987654));
    let n = d.refresh(&Fixed(Ok(vec![rbox(1, [0.0, 0.0, 1.0, 1.0])])), 5).unwrap();
    assert_eq!(n, 1);
    let c = d.state().coverage_center().unwrap();
    assert!((c.lat() - 40.12).abs() < 1e-9 && (c.lon() + 74.99).abs() < 1e-9);
    assert_eq!(d.state().last_refresh_at(), Some(5));
}

#[test]
fn failed_refresh_leaves_state_untouched() {
    let mut d = refreshed(vec![rbox(1, [0.0, 0.0, 1.0, 1.0])], pt(0.5, 0.5), 0);
    d.tick(600, pt(0.6, 0.6));
    let before = d.state().clone();
    for err in [FetchError::FetchFailed("down".into()), FetchError::ServerRejected(400)] {
        assert_eq!(d.refresh(&Fixed(Err(err.clone())), 700), Err(err));
        assert_eq!(d.state(), &before);
    }
}

#[test]
fn capture_examples() {
    let b = rbox(7, [-74.01, 40.0, -74.0, 40.01]);
    let home = pt(40.005, -74.005);
    let d = refreshed(vec![b.clone()], home, 0);

    assert_eq!(
        d.capture_request(60, home),
        CaptureDecision::DeniedRestrictedArea {
            box_id: b.id(),
            distance: Distance::ZERO
        }
    );

    let far = north_of(pt(40.01, -74.005), 2_000.0);
    assert_eq!(d.capture_request(60, far), CaptureDecision::Allowed);

    let near = north_of(pt(40.01, -74.005), 300.0);
    match d.capture_request(60, near) {
        CaptureDecision::DeniedRestrictedArea { box_id, distance } => {
            assert_eq!(box_id, b.id());
            assert!((distance.meters() - 300.0).abs() < 1e-6);
        }
        other => panic!("{other:?}"),
    }

    assert_eq!(d.capture_request(31 * DAY, far), CaptureDecision::DeniedStaleCache);
    assert_eq!(d.capture_request(31 * DAY, home), CaptureDecision::DeniedStaleCache);
}

#[test]
fn lockout_boundary() {
    let home = pt(40.0, -74.0);
    let d = refreshed(vec![], home, 0);
    let lockout = d.policy().lockout_after_s;
    assert_eq!(d.capture_request(lockout, home), CaptureDecision::Allowed);
    assert_eq!(d.capture_request(lockout + 1, home), CaptureDecision::DeniedStaleCache);
}

#[test]
fn uncovered_positions_denied() {
    let home = pt(40.0, -74.0);
    let d = refreshed(vec![], home, 0);
    assert_eq!(d.capture_request(60, north_of(home, 41_000.0)), CaptureDecision::DeniedNoCoverage);

    let fresh = Device::new(DevicePolicy::default()).unwrap();
    assert_eq!(fresh.capture_request(0, home), CaptureDecision::DeniedNoCoverage);
}

#[test]
fn nearest_offender_is_reported() {
    let home = pt(0.0, 0.0);
    let d = refreshed(
        vec![rbox(3, [0.002, -0.001, 0.003, 0.001]), rbox(2, [0.001, -0.001, 0.0015, 0.001])],
        home,
        0,
    );
    match d.capture_request(1, home) {
        CaptureDecision::DeniedRestrictedArea { box_id, .. } => assert_eq!(box_id, BoxId::from_u128(2)),
        other => panic!("{other:?}"),
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> Device {
    let policy = DevicePolicy {
        permissible_distance: Distance::from_meters(rng.random_range(1.0..2_000.0)).unwrap(),
        ..DevicePolicy::default()
    };
    let mut d = Device::new(policy).unwrap();
    let home = pt(rng.random_range(-60.0..60.0), rng.random_range(-170.0..170.0));
    let boxes = (0..rng.random_range(0..40u128))
        .map(|i| {
            let lat = home.lat() + rng.random_range(-0.2..0.2);
            let lon = home.lon() + rng.random_range(-0.2..0.2);
            rbox(i, [lon, lat, lon + rng.random_range(0.0..0.02), lat + rng.random_range(0.0..0.02)])
        })
        .collect();
    d.tick(0, home);
    if rng.random_bool(0.8) {
        let r = d.policy().fetch_radius;
        d.apply_refresh(boxes, home, r, rng.random_range(-40 * DAY..0));
    }
    d
}

#[test]
fn gate_matches_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let d = random_state(&mut rng);
        let home = d.state().last_location().unwrap();
        for _ in 0..20 {
            let fix = pt(home.lat() + rng.random_range(-0.3..0.3), home.lon() + rng.random_range(-0.3..0.3));
            let now = rng.random_range(0..DAY);
            let decision = d.capture_request(now, fix);

            let locked = d
                .state()
                .last_refresh_at()
                .is_some_and(|t| now - t > d.policy().lockout_after_s);
            let covered = d
                .state()
                .coverage_center()
                .is_some_and(|c| haversine_distance(c, fix) <= d.state().coverage_radius());
            let offenders: Vec<(BoxId, f64)> = d
                .state()
                .cache()
                .iter()
                .map(|b| (b.id(), distance_to_box(fix, b.extent()).meters()))
                .filter(|&(_, m)| m <= d.policy().permissible_distance.meters())
                .collect();

            match decision {
                CaptureDecision::DeniedStaleCache => assert!(locked),
                CaptureDecision::DeniedNoCoverage => assert!(!locked && !covered),
                CaptureDecision::Allowed => assert!(!locked && covered && offenders.is_empty()),
                CaptureDecision::DeniedRestrictedArea { box_id, distance } => {
                    assert!(!locked && covered);
                    let min = offenders.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
                    assert_eq!(distance.meters(), min);
                    assert!(offenders.contains(&(box_id, min)));
                }
            }
        }
    }
}

#[test]
fn never_allowed_without_refresh() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut d = Device::new(DevicePolicy::default()).unwrap();
    for i in 0..1000 {
        let fix = pt(rng.random_range(-90.0..90.0), rng.random_range(-180.0..180.0));
        d.tick(i * 600, fix);
        assert_ne!(d.capture_request(i * 600, fix), CaptureDecision::Allowed);
    }
}

proptest! {
    #[test]
    fn lockout_is_monotone(seed in any::<u64>(), later in 1i64..10_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_state(&mut rng);
        let fix = d.state().last_location().unwrap();
        let t = d.state().last_refresh_at().unwrap_or(0) + d.policy().lockout_after_s + 1;
        if d.capture_request(t, fix) == CaptureDecision::DeniedStaleCache {
            prop_assert_eq!(d.capture_request(t + later, fix), CaptureDecision::DeniedStaleCache);
        }
    }

    #[test]
    fn identical_inputs_identical_outputs(seed in any::<u64>(), now in 0i64..DAY, dlat in -0.1..0.1f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_state(&mut rng);
        let fix = pt(d.state().last_location().unwrap().lat() + dlat, d.state().last_location().unwrap().lon());
        prop_assert_eq!(d.capture_request(now, fix), d.capture_request(now, fix));
        let (mut a, mut b) = (d.clone(), d.clone());
        prop_assert_eq!(a.tick(now, fix), b.tick(now, fix));
        prop_assert_eq!(a.state(), b.state());
    }
}

#[test]
fn cache_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("device.cache");

    let empty = DeviceState::default();
    empty.save(&path).unwrap();
    assert_eq!(DeviceState::load(&path).unwrap(), empty);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let state = random_state(&mut rng).into_state();
        state.save(&path).unwrap();
        assert_eq!(DeviceState::load(&path).unwrap(), state);
    }
}

#[test]
fn truncated_cache_file_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("device.cache");
    let state = refreshed(vec![rbox(1, [0.0, 0.0, 1.0, 1.0])], pt(0.5, 0.5), 0).into_state();
    let len = state.save(&path).unwrap();
    std::fs::OpenOptions::new().write(true).open(&path).unwrap().set_len(len - 1).unwrap();
    assert!(matches!(DeviceState::load(&path), Err(DeviceError::CorruptSnapshot(_))));
}

#[test]
fn registry_snapshot_is_not_a_device_cache() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("boxes.snap");
    let r = crate::Registry::in_memory();
    r.add_box(BoxExtent::new(0.0, 0.0, 1.0, 1.0).unwrap(), "ops", "", 0).unwrap();
    r.save_snapshot(&path).unwrap();
    assert!(matches!(DeviceState::load(&path), Err(DeviceError::CorruptSnapshot(_))));
}

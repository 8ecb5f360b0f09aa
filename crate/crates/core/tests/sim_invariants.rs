use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use taxiout::ingest::{read_track_log_bytes, EventKind, FlightKind, Record};
use taxiout::surface_sim::{
    build_layout, plan_day, run_plans, simulate_day, simulate_day_detailed, CongestionParams, DemandSchedule,
    FlightPlan, LayoutConfig, RunwayEndConfig, SERVICE_STREAM,
};

const DAY: i64 = 1_704_067_200;
// Simulated times are absolute unix seconds (~1.7e9), so replayed sums carry ~2e-7 s of rounding.
const REPLAY_TOL: f64 = 1e-6;

fn single_path(seconds: f64) -> LayoutConfig {
    LayoutConfig {
        airport_id: "T".into(),
        nodes: vec![[40.0, -73.0], [40.01, -73.0]],
        edges: vec![(0, 1, seconds)],
        gates: vec![0],
        runway_ends: vec![RunwayEndConfig {
            node: 1,
            name: "R".into(),
        }],
        active_runway_end: 0,
        runway_changes: vec![],
        queue_spacing_m: 60.0,
    }
}

fn fixed_mean(mean: f64) -> CongestionParams {
    CongestionParams {
        mean_service_s: mean,
        day_factor_sigma: 0.0,
    }
}

/// Service draws replayed from the seeded stream, outside the simulator.
fn service_draws(seed: u64, mean: f64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SERVICE_STREAM);
    let exp = Exp::new(1.0 / mean).unwrap();
    (0..n).map(|_| exp.sample(&mut rng)).collect()
}

fn dep(id: &str, start_s: i64) -> FlightPlan {
    FlightPlan {
        flight_id: id.into(),
        kind: FlightKind::Departure,
        gate: 0,
        start_s,
    }
}

#[test]
fn lone_departure_is_path_plus_one_service() {
    let layout = build_layout(&single_path(300.0)).unwrap();
    let mut sum = 0.0;
    let n = 4000;
    for seed in 0..n {
        let out = run_plans(&layout, &[dep("D1", 3600)], &fixed_mean(60.0), seed, DAY).unwrap();
        let f = &out.flights[0];
        let s = service_draws(seed, 60.0, 1)[0];
        assert!((f.taxi_s - (300.0 + s)).abs() < REPLAY_TOL);
        sum += f.taxi_s;
    }
    // Expected 300 + 60; standard error of the mean is 60/sqrt(n) < 1 s.
    assert!((sum / n as f64 - 360.0).abs() < 4.0, "mean {}", sum / n as f64);
}

#[test]
fn fourth_in_queue_waits_for_four_draws() {
    let layout = build_layout(&single_path(300.0)).unwrap();
    let plans: Vec<_> = (1..=4).map(|i| dep(&format!("D{i}"), 7200)).collect();
    for seed in [1u64, 9, 77] {
        let out = run_plans(&layout, &plans, &fixed_mean(60.0), seed, DAY).unwrap();
        let draws = service_draws(seed, 60.0, 4);
        let last = out.flights.iter().find(|f| f.flight_id == "D4").unwrap();
        let expect = 300.0 + draws.iter().sum::<f64>();
        assert!((last.taxi_s - expect).abs() < REPLAY_TOL, "{} vs {expect}", last.taxi_s);
    }
}

#[test]
fn simulate_is_byte_deterministic() {
    let layout = build_layout(&LayoutConfig::toy_lga()).unwrap();
    let sched = DemandSchedule::toy_default();
    let c = CongestionParams::default();
    let a = simulate_day(&layout, &sched, &c, 11, DAY).unwrap().to_bytes();
    let b = simulate_day(&layout, &sched, &c, 11, DAY).unwrap().to_bytes();
    let other = simulate_day(&layout, &sched, &c, 12, DAY).unwrap().to_bytes();
    assert_eq!(a, b);
    assert_ne!(a, other);
    assert_eq!(read_track_log_bytes(&a).unwrap().to_bytes(), a);
}

#[test]
fn log_invariants_on_toy_days() {
    let layout = build_layout(&LayoutConfig::toy_lga()).unwrap();
    let sched = DemandSchedule::toy_default();
    for seed in 0..3u64 {
        let out = simulate_day_detailed(&layout, &sched, &CongestionParams::default(), seed, DAY).unwrap();
        let recs = &out.log.records;
        assert!(recs.windows(2).all(|w| w[0].timestamp() <= w[1].timestamp()));

        let mut out_t: HashMap<&str, i64> = HashMap::new();
        let mut points_per_minute: HashMap<(&str, i64), usize> = HashMap::new();
        for r in recs {
            match r {
                Record::Event(e) if e.event == EventKind::Out => {
                    out_t.insert(&e.flight_id, e.timestamp);
                }
                Record::Point(p) => {
                    assert_eq!(p.timestamp % 60, 0, "point off the minute");
                    assert!(p.ground_speed >= 0.0);
                    *points_per_minute.entry((&p.flight_id, p.timestamp)).or_default() += 1;
                }
                _ => {}
            }
        }
        assert!(points_per_minute.values().all(|&n| n == 1));
        for f in out.flights.iter().filter(|f| f.kind == FlightKind::Departure) {
            assert_eq!(out_t[f.flight_id.as_str()], f.open);
            assert!((f.close - f.open) as f64 >= f.unimpeded_s, "{} beat its unimpeded time", f.flight_id);
        }
        // Queued aircraft report zero speed.
        for r in recs {
            if let Record::Point(p) = r {
                if let Some(f) = out.flights.iter().find(|f| f.flight_id == p.flight_id) {
                    if f.queue_entry.is_some_and(|q| (p.timestamp as f64) > q) {
                        assert_eq!(p.ground_speed, 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn more_departures_do_not_shorten_taxi_out() {
    let layout = build_layout(&LayoutConfig::toy_lga()).unwrap();
    let sched = DemandSchedule::toy_default();
    let doubled = sched.scaled(2);
    for seed in 0..5u64 {
        let c = CongestionParams::default();
        let a = simulate_day_detailed(&layout, &sched, &c, seed, DAY).unwrap();
        let b = simulate_day_detailed(&layout, &doubled, &c, seed, DAY).unwrap();
        assert!(b.mean_taxi_out() >= a.mean_taxi_out(), "seed {seed}");
    }
}

#[test]
fn plans_follow_the_schedule() {
    let layout = build_layout(&LayoutConfig::toy_lga()).unwrap();
    let sched = DemandSchedule::toy_default();
    let plans = plan_day(&layout, &sched, 3);
    for kind in [FlightKind::Departure, FlightKind::Arrival] {
        for hour in 0..24 {
            let n = plans
                .iter()
                .filter(|p| p.kind == kind && p.start_s / 3600 == hour as i64)
                .count();
            assert_eq!(n as u32, sched.count(kind, hour));
        }
    }
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxiout::dataset::{
    build_day, build_samples, label_window, live_window, split_dataset, DatasetError, DayInputs, SampleWindow,
    DEFAULT_FRACTIONS,
};
use taxiout::metadata::DEFAULT_DIM;
use taxiout::rasterize::{fit_extent, GridSpec, Norms};
use taxiout::surface_sim::{build_layout, simulate_day, CongestionParams, DemandSchedule, LayoutConfig, ProjectionJitter};

const DAY: i64 = 1_704_067_200;

/// Scans every horizon minute directly.
fn brute_label(series: &[f64], t0: usize, theta: f64) -> u8 {
    let mut hit = 0;
    for (m, &v) in series.iter().enumerate() {
        if m >= t0 + 31 && m <= t0 + 90 && v > theta {
            hit = 1;
        }
    }
    hit
}

#[test]
fn labels_match_brute_force_on_1000_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut positives = 0;
    for case in 0..1000 {
        let len = rng.gen_range(91..400);
        let theta = rng.gen_range(5.0..30.0);
        // Mostly below threshold with sparse spikes, some landing exactly on it.
        let series: Vec<f64> = (0..len)
            .map(|_| match rng.gen_range(0..100) {
                0 => theta,
                1..=3 => theta + rng.gen_range(0.001..5.0),
                _ => rng.gen_range(0.0..theta),
            })
            .collect();
        let t0 = rng.gen_range(0..=len - 91);
        let got = label_window(&series, t0, theta).unwrap();
        assert_eq!(got, brute_label(&series, t0, theta), "case {case}, t0 {t0}");
        positives += got as usize;
        assert!(label_window(&series, len - 90, theta).is_err());
    }
    assert!(positives > 100 && positives < 900, "degenerate mix: {positives}");
}

fn toy_day(seed: u64) -> (taxiout::ingest::TrackLog, GridSpec) {
    let layout = build_layout(&LayoutConfig::toy_lga()).unwrap();
    let log = simulate_day(&layout, &DemandSchedule::toy_default(), &CongestionParams::default(), seed, DAY).unwrap();
    let points: Vec<_> = log.points().map(|p| (p.lat, p.lon)).collect();
    let grid = GridSpec::new(fit_extent(&points, 0.995).unwrap(), 20, 33).unwrap();
    (log, grid)
}

#[test]
fn full_day_gives_136_samples_and_live_windows_agree() {
    let (log, grid) = toy_day(4);
    let sched = DemandSchedule::toy_default();
    let norms = Norms::default();
    let inputs = DayInputs {
        grid: &grid,
        norms: &norms,
        schedule: &sched,
        jitter: ProjectionJitter { amplitude: 2, seed: 4 },
        metadata_dim: DEFAULT_DIM,
    };
    let day = build_day(&log, DAY, &inputs).unwrap();
    let samples = build_samples(&day, 20.0, 10).unwrap();
    assert_eq!(samples.len(), 136);
    assert_eq!(samples[0].t0, DAY);
    assert_eq!(samples[135].t0, DAY + 1350 * 60);
    for s in &samples {
        assert_eq!(s.frames.len(), 30);
        assert_eq!(s.metadata.len(), 30);
    }

    for k in [0usize, 41, 90, 135] {
        let s = &samples[k];
        // Any second inside the minute after the window maps to the same window.
        let live = live_window(&log, DAY, s.t0 + 30 * 60 + 17, &inputs).unwrap();
        assert_eq!(live.t0, s.t0);
        assert_eq!(live.frames, s.frames, "frames differ at sample {k}");
        assert_eq!(live.metadata, s.metadata, "metadata differ at sample {k}");
    }
    match live_window(&log, DAY, DAY + 29 * 60 + 59, &inputs) {
        Err(DatasetError::InsufficientHistory { have: 29, need: 30 }) => {}
        other => panic!("expected insufficient history, got {other:?}"),
    }
}

fn light_sample(t0: i64) -> SampleWindow {
    SampleWindow {
        t0,
        frames: vec![],
        metadata: vec![vec![(t0 % 7) as f32]; 30],
        label: (t0 / 600 % 5 == 0) as u8,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn purged_splits_never_overlap_horizons(
        n in 10usize..3000,
        gaps in prop::collection::vec(0u32..3, 1..40),
    ) {
        // Ten-minute stride with occasional multi-hour jumps between days.
        let mut t = DAY;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            samples.push(light_sample(t));
            t += 600 + gaps[i % gaps.len()] as i64 * 3 * 3600 * (i % 97 == 96) as i64;
        }
        let r = split_dataset(samples, DEFAULT_FRACTIONS, 90).unwrap();
        let [a, b, c] = r.sizes_before_purge;
        prop_assert_eq!(a + b + c, n);
        for (got, f) in [(a, 0.6), (b, 0.2), (c, 0.2)] {
            prop_assert!((got as f64 - f * n as f64).abs() <= 1.0, "{} vs {}", got, f * n as f64);
        }
        let horizon_end = |s: &SampleWindow| s.t0 + 90 * 60;
        if let (Some(tr), Some(te)) = (r.train.iter().map(horizon_end).max(), r.test.iter().map(|s| s.t0).min()) {
            prop_assert!(tr < te);
        }
        if let (Some(tr), Some(va)) = (r.train.iter().map(horizon_end).max(), r.validation.iter().map(|s| s.t0).min()) {
            prop_assert!(tr < va);
        }
        if let (Some(va), Some(te)) = (r.validation.iter().map(horizon_end).max(), r.test.iter().map(|s| s.t0).min()) {
            prop_assert!(va < te);
        }
        // Purging only removes the last 9 windows (t0 + 90 >= next start) of an earlier split.
        prop_assert!(r.purged[0] <= 9 && r.purged[1] <= 9 && r.purged[2] == 0);
    }
}

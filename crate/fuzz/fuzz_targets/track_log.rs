#![no_main]
use libfuzzer_sys::fuzz_target;
use taxiout::ingest::{build_snapshots, read_track_log_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(log) = read_track_log_bytes(data) {
        // Accepted logs re-serialize to something that parses identically.
        let again = read_track_log_bytes(&log.to_bytes()).expect("re-parse");
        assert_eq!(again, log);
        if let Some(first) = log.records.first() {
            let start = first.timestamp().div_euclid(60) * 60;
            let _ = build_snapshots(&log, start, start + 120 * 60);
        }
    }
});

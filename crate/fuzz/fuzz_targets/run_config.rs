#![no_main]
use libfuzzer_sys::fuzz_target;
use taxi_alert::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = serde_json::from_str::<RunConfig>(text) {
        let _ = cfg.validate();
    }
});

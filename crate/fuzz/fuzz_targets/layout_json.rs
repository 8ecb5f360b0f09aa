#![no_main]
use libfuzzer_sys::fuzz_target;
use taxiout::surface_sim::{build_layout, LayoutConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = LayoutConfig::from_json(text) {
        // Bound the graph so shortest-path work stays small.
        if cfg.nodes.len() <= 256 && cfg.edges.len() <= 1024 {
            let _ = build_layout(&cfg);
        }
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use taxiout::calibrate::BoostModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = BoostModel::from_json(text) {
        let x = vec![0.5; m.n_features];
        let _ = m.margin(&x);
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use taxiout::surface_sim::DemandSchedule;

fuzz_target!(|data: &[u8]| {
    let _ = DemandSchedule::from_csv(data);
});

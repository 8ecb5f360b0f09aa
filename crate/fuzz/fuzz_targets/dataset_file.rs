#![no_main]
use libfuzzer_sys::fuzz_target;
use taxiout::dataset::read_dataset;

fuzz_target!(|data: &[u8]| {
    let _ = read_dataset(data);
});

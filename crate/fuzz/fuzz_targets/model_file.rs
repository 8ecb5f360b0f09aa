#![no_main]
use libfuzzer_sys::fuzz_target;
use taxiout::nn::read_model;

fuzz_target!(|data: &[u8]| {
    let _ = read_model(data);
});

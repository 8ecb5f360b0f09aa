#![no_main]
use libfuzzer_sys::fuzz_target;
use taxiout::rasterize::read_frames;

fuzz_target!(|data: &[u8]| {
    let _ = read_frames(data);
});

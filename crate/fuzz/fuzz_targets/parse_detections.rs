#![no_main]

use hoi_core::formats::{parse_detections, write_detections, Strictness};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for mode in [Strictness::Strict, Strictness::Lenient] {
        if let Ok(scenes) = parse_detections(text, mode) {
            let out = write_detections(&scenes);
            parse_detections(&out, Strictness::Strict).expect("rewritten detections parse");
        }
    }
});

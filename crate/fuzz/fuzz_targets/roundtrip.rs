#![no_main]

//! Write, read, write must be byte-identical for every accepted file.

use hoi_core::formats::{
    parse_detections, parse_scenes, parse_triplets, write_detections, write_scenes, write_triplets, Strictness,
};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = parse_scenes(text, Strictness::Strict) {
        let once = write_scenes(s.iter().map(|(i, s)| (*i, s)));
        let again = parse_scenes(&once, Strictness::Strict).unwrap();
        assert_eq!(once, write_scenes(again.iter().map(|(i, s)| (*i, s))));
    }
    if let Ok(d) = parse_detections(text, Strictness::Strict) {
        let once = write_detections(&d);
        assert_eq!(
            once,
            write_detections(&parse_detections(&once, Strictness::Strict).unwrap())
        );
    }
    if let Ok(t) = parse_triplets(text, Strictness::Strict) {
        let once = write_triplets(&t);
        assert_eq!(
            once,
            write_triplets(&parse_triplets(&once, Strictness::Strict).unwrap())
        );
    }
});

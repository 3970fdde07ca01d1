#![no_main]

use hoi_core::formats::{parse_scenes, write_scenes, Strictness};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for mode in [Strictness::Strict, Strictness::Lenient] {
        if let Ok(scenes) = parse_scenes(text, mode) {
            // anything accepted must survive a rewrite
            let out = write_scenes(scenes.iter().map(|(i, s)| (*i, s)));
            parse_scenes(&out, Strictness::Strict).expect("rewritten scenes parse");
        }
    }
});

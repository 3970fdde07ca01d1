#![no_main]

use hoi_core::formats::{parse_triplets, Strictness};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_triplets(text, Strictness::Strict);
    let _ = parse_triplets(text, Strictness::Lenient);
});

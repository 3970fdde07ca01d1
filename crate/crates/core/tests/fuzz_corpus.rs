//! Replays the fuzz corpus seeds through the same checks the fuzz targets
//! run, so the seeds stay meaningful without a nightly toolchain.

use std::fs;
use std::path::PathBuf;

use hoi_core::formats::{
    parse_detections, parse_scenes, parse_triplets, write_detections, write_scenes, write_triplets, Strictness,
};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn scene_seeds() {
    let mut accepted = 0;
    for (name, text) in seeds("parse_scenes") {
        for mode in [Strictness::Strict, Strictness::Lenient] {
            if let Ok(s) = parse_scenes(&text, mode) {
                let once = write_scenes(s.iter().map(|(i, s)| (*i, s)));
                let again = parse_scenes(&once, Strictness::Strict).unwrap_or_else(|e| panic!("{name}: {e}"));
                assert_eq!(once, write_scenes(again.iter().map(|(i, s)| (*i, s))), "{name}");
                accepted += 1;
            }
        }
    }
    assert!(accepted > 0);
    assert!(parse_scenes(
        &seeds("parse_scenes")
            .iter()
            .find(|(n, _)| n.ends_with("inverted_box.jsonl"))
            .unwrap()
            .1,
        Strictness::Strict
    )
    .is_err());
}

#[test]
fn detection_seeds() {
    for (name, text) in seeds("parse_detections") {
        let d = parse_detections(&text, Strictness::Strict).unwrap_or_else(|e| panic!("{name}: {e}"));
        let once = write_detections(&d);
        assert_eq!(once, text, "{name}");
        assert_eq!(
            once,
            write_detections(&parse_detections(&once, Strictness::Strict).unwrap())
        );
    }
}

#[test]
fn triplet_seeds() {
    for (name, text) in seeds("parse_triplets") {
        match parse_triplets(&text, Strictness::Strict) {
            Ok(t) => assert_eq!(write_triplets(&t), text, "{name}"),
            Err(_) => assert!(name.ends_with("nan.jsonl"), "{name} rejected"),
        }
        let _ = parse_triplets(&text, Strictness::Lenient);
    }
}

#[test]
fn roundtrip_seeds() {
    for (name, text) in seeds("roundtrip") {
        let mut accepted = false;
        if let Ok(s) = parse_scenes(&text, Strictness::Strict) {
            assert_eq!(write_scenes(s.iter().map(|(i, s)| (*i, s))), text, "{name}");
            accepted = true;
        }
        if let Ok(d) = parse_detections(&text, Strictness::Strict) {
            assert_eq!(write_detections(&d), text, "{name}");
            accepted = true;
        }
        if let Ok(t) = parse_triplets(&text, Strictness::Strict) {
            assert_eq!(write_triplets(&t), text, "{name}");
            accepted = true;
        }
        assert!(accepted, "{name} parses as nothing");
    }
}

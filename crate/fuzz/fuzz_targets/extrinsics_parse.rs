#![no_main]

use libfuzzer_sys::fuzz_target;
use motionfield::io::pose::{format_extrinsics, parse_extrinsics_text};

fuzz_target!(|text: &str| {
    if let Ok(poses) = parse_extrinsics_text(text) {
        let reparsed =
            parse_extrinsics_text(&format_extrinsics(&poses)).expect("own output must parse");
        assert_eq!(reparsed.len(), poses.len());
        for (a, b) in poses.iter().zip(&reparsed) {
            assert!((a.rotation() - b.rotation()).amax() < 1e-9);
            assert!((a.translation() - b.translation()).amax() < 1e-9);
        }
    }
});

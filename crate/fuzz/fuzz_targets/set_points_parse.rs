#![no_main]

use libfuzzer_sys::fuzz_target;
use motionfield::trajectory::{parse_set_points, GridSpec};

fuzz_target!(|text: &str| {
    if let Ok(spec) = parse_set_points(text) {
        assert!((1..=4).contains(&spec.points.len()));
        let grid = GridSpec::new(20, 10, 2560, 1600).unwrap();
        if spec.validate_for(&grid).is_ok() {
            let pixels = spec.resolve(&grid).expect("validated points must resolve");
            for (u, v) in pixels {
                assert!((0.0..2560.0).contains(&u));
                assert!((0.0..1600.0).contains(&v));
            }
        }
    }
});

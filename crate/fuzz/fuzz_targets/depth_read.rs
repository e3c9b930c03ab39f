#![no_main]

use libfuzzer_sys::fuzz_target;
use motionfield::io::depth::{decode_depth_png, read_dpt1_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(depth) = read_dpt1_bytes(data) {
        for row in 0..depth.height() {
            for col in 0..depth.width() {
                if depth.is_valid(row, col) {
                    let d = depth.get(row, col);
                    assert!(d.is_finite() && d > 0.0);
                }
            }
        }
    }
    let _ = decode_depth_png(data, 1000.0);
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use motionfield::io::traj_json::parse_trajectory_json;

fuzz_target!(|text: &str| {
    if let Ok(file) = parse_trajectory_json(text) {
        let _ = file.resolve(2560, 1600);
    }
});

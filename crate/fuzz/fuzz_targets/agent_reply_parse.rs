#![no_main]

use libfuzzer_sys::fuzz_target;
use motionfield::agent::action::{parse_reply, ParsedAction};

fuzz_target!(|text: &str| {
    if let Ok(reply) = parse_reply(text) {
        match reply.action.action {
            ParsedAction::Camera(spec) => spec.validate().expect("parsed specs are validated"),
            ParsedAction::Trajectory(spec) => {
                assert!((1..=4).contains(&spec.points.len()));
            }
        }
    }
});

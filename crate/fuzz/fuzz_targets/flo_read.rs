#![no_main]

use libfuzzer_sys::fuzz_target;
use motionfield::io::flo::{read_flo_bytes, write_flo_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(flow) = read_flo_bytes(data) {
        // One read normalizes NaN payloads; after that, encoding must be a
        // fixed point.
        let encoded = write_flo_bytes(&flow);
        let reread = read_flo_bytes(&encoded).expect("own encoding must parse");
        assert_eq!(write_flo_bytes(&reread), encoded);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::uplink::{decode_json, encode_json};

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = decode_json(data) {
        assert_eq!(decode_json(&encode_json(&report)).unwrap(), report);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::uplink::{decode_lorawan, encode_lorawan};

fuzz_target!(|data: &[u8]| {
    if let Ok(fields) = decode_lorawan(data) {
        let report = fields.into_report("fuzz", 0);
        assert_eq!(&encode_lorawan(&report).0[..], data);
    }
});

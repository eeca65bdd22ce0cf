#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::capture::strip_radiotap;

fuzz_target!(|data: &[u8]| {
    if let Ok(rest) = strip_radiotap(data) {
        assert!(rest.len() <= data.len());
        assert!(data.ends_with(rest));
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::oui::build_from_manuf;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = build_from_manuf(text);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::detector::fingerprint_ies;
use sttk_core::frame::extract_ies;
use sttk_core::FingerprintConfig;

fuzz_target!(|data: &[u8]| {
    let ies = extract_ies(data);
    let mut out = Vec::new();
    for ie in &ies {
        ie.write_to(&mut out);
    }
    assert!(data.starts_with(&out));
    let _ = fingerprint_ies(&ies, &FingerprintConfig::default());
});

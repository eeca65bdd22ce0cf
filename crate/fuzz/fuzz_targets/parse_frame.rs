#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::detector::{classify_branch, process_frame};
use sttk_core::oui::OuiRegistry;
use sttk_core::{parse_frame, FingerprintConfig, Salt, Timestamp};

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = parse_frame(data) {
        // decoding is lossless for anything it accepts
        assert_eq!(frame.to_bytes(), data);
        let reg = OuiRegistry::default();
        let branch = classify_branch(&frame, &reg);
        let obs = process_frame(&frame, Timestamp::ZERO, &FingerprintConfig::default(), &reg, Salt(1));
        assert_eq!(obs.map(|o| o.kind), branch.kind());
    }
});

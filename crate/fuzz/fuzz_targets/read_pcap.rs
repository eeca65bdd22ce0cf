#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::capture::{read_pcap_with, ReadOptions};

fuzz_target!(|data: &[u8]| {
    for fcs_present in [false, true] {
        if let Ok(cap) = read_pcap_with(data, ReadOptions { fcs_present }) {
            for rec in &cap.records {
                let _ = sttk_core::parse_frame(&rec.frame_bytes);
            }
        }
    }
});

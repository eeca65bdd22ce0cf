#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::collector::Collector;

fuzz_target!(|data: &[u8]| {
    let collector = Collector::in_memory(Vec::new());
    for line in String::from_utf8_lossy(data).lines() {
        let _ = collector.ingest_line(line);
    }
});

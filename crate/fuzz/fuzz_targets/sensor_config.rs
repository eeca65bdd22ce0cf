#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::config::SensorConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = std::str::from_utf8(data).map(SensorConfig::from_json) {
        if let Ok(cfg) = cfg {
            let _ = cfg.validate();
        }
    }
});

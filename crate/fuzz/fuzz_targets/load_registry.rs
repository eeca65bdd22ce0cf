#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::oui::load_registry;

fuzz_target!(|data: &[u8]| {
    if let Ok(reg) = load_registry(data) {
        let mut out = Vec::new();
        reg.write_to(&mut out, "").unwrap();
        let again = load_registry(&out[..]).unwrap();
        assert_eq!(again.len(), reg.len());
    }
});

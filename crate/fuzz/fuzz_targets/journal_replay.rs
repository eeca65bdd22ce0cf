#![no_main]

use libfuzzer_sys::fuzz_target;
use sttk_core::window::WindowStore;

fuzz_target!(|data: &[u8]| {
    let mut store = WindowStore::new();
    let _ = store.replay(data);
});

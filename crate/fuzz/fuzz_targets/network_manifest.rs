#![no_main]

use hyperseg_core::segnet::NetworkManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = NetworkManifest::parse(text) {
            // Parsed configs are valid, so their shapes are computable.
            let _ = m.config.layer_shapes();
        }
    }
});

#![no_main]

use hyperseg_core::trainer::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = TrainConfig::parse(text) {
            cfg.validate().expect("parsed configs are valid");
        }
    }
});

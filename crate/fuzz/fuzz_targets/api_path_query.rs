#![no_main]

use hyperseg_service::wire::{parse_click_path, parse_mask_query};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_click_path(text);
        let _ = parse_mask_query(text);
    }
});

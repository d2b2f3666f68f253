#![no_main]

use hyperseg_core::image_io::{decode_frame_png, decode_mask_png};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = decode_frame_png(data) {
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    if let Ok(m) = decode_mask_png(data) {
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
});

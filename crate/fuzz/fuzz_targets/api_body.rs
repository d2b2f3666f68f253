#![no_main]

use hyperseg_core::interaction::Click;
use hyperseg_service::wire::{decode_png_base64, parse_json, CreateSessionRequest, FrameRequest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = parse_json::<CreateSessionRequest>(data) {
        let _ = decode_png_base64(&req.frame_png_base64, "frame_png_base64");
    }
    let _ = parse_json::<FrameRequest>(data);
    let _ = parse_json::<Click>(data);
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = decode_png_base64(text, "body");
    }
});

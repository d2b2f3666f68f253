#![no_main]

use hyperseg_core::interaction::{parse_clicks, ClickState};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_clicks(text);
    if let Ok(state) = ClickState::from_json(16, 16, text) {
        let again = ClickState::from_json(16, 16, &state.to_json()).expect("round trip");
        assert_eq!(again, state);
    }
});

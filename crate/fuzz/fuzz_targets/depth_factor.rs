#![no_main]

use hyperseg_core::tucker::{DepthFactor, DepthFactorMeta};
use hyperseg_core::Tensor;
use libfuzzer_sys::fuzz_target;

// Input: u32 little-endian length of the JSON sidecar, the sidecar, then the
// factor container.
fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let n = u32::from_le_bytes(data[..4].try_into().unwrap()) as usize;
    let rest = &data[4..];
    if n > rest.len() {
        return;
    }
    let Ok(meta) = serde_json::from_slice::<DepthFactorMeta>(&rest[..n]) else { return };
    if let Ok(t) = Tensor::from_bytes(&rest[n..]) {
        let _ = DepthFactor::from_parts(t, meta);
    }
});

#![no_main]

use hyperseg_cli::features_file::{parse_ranks, parse_size, FeatureManifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = FeatureManifest::parse(text) {
        let _ = parse_ranks("halving", &m.layers);
    }
    let _ = parse_size(text);
    let _ = parse_ranks(text, &[("conv1".into(), 8), ("conv2".into(), 16)]);
});

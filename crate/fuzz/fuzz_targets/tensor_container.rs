#![no_main]

use hyperseg_core::Tensor;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Tensor::from_bytes(data) {
        let again = Tensor::from_bytes(&t.to_bytes()).expect("re-encoded container decodes");
        assert_eq!(again.shape(), t.shape());
        assert!(again.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});

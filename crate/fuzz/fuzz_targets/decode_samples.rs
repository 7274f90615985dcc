#![no_main]

use libfuzzer_sys::fuzz_target;
use shiftlab::inference::{decode_samples, encode_samples};

fuzz_target!(|data: &[u8]| {
    if let Ok((layout, samples)) = decode_samples(data) {
        let (_, back) = decode_samples(&encode_samples(&layout, &samples)).expect("re-encoded chain decodes");
        let bits = |s: &[Vec<f64>]| s.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&samples), bits(&back));
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use shiftlab::data::{decode_arrays, encode_arrays};

fuzz_target!(|data: &[u8]| {
    if let Ok((inputs, targets)) = decode_arrays(data) {
        let again = encode_arrays(&inputs, &targets);
        decode_arrays(&again).expect("re-encoded arrays decode");
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use shiftlab::data::decode_dataset;

// input: descriptor JSON, a NUL byte, then the array payload
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let Ok(descriptor) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let _ = decode_dataset(descriptor, &data[split + 1..]);
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use shiftlab::data::parse_idx;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = parse_idx(data) {
        assert_eq!(a.dims.iter().product::<usize>(), a.data.len());
    }
});

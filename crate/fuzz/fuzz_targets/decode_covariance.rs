#![no_main]

use libfuzzer_sys::fuzz_target;
use shiftlab::priors::CovariancePrior;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = CovariancePrior::from_bytes(data) {
        CovariancePrior::from_bytes(&p.to_bytes()).expect("re-encoded prior decodes");
    }
});

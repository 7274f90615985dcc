#![no_main]

use libfuzzer_sys::fuzz_target;
use shiftlab::experiment::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        let _ = cfg.validate();
        let again = serde_json::to_string(&cfg).expect("parsed config serializes");
        let back = parse_config(&again).expect("serialized config parses");
        assert_eq!(cfg.hash(), back.hash());
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = sgc::harness::Dataset::decode(data) {
        assert_eq!(sgc::harness::Dataset::decode(&d.encode()).unwrap(), d);
    }
});

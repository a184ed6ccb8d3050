#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = sgc::potentialnet::ModelConfig::from_json(text);
        let _ = sgc::harness::ExperimentConfig::from_json(text);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = sgc::cvsplit::FoldAssignment::from_csv(data);
});

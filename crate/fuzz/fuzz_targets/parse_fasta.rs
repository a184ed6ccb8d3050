#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(records) = sgc::cvsplit::parse_fasta(text) {
            if records.len() <= 8 {
                let _ = sgc::cvsplit::identity_distances(&records);
            }
        }
    }
});

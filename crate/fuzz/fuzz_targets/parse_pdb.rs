#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = sgc::chemio::parse_pdb(data, "LIG");
    let _ = sgc::chemio::parse_pdb_structure(data);
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = sgc::cvsplit::DistanceMatrix::from_csv(data) {
        let _ = sgc::cvsplit::ward_cluster(&d, sgc::cvsplit::Cut::Clusters(1));
    }
});

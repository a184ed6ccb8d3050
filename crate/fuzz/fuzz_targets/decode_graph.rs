#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = sgc::graphbuild::decode_graph(data) {
        assert_eq!(sgc::graphbuild::encode_graph(&g), data);
    }
});

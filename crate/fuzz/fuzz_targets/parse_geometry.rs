#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(patch) = igadd::io::read_geometry(text) {
            let again = igadd::io::read_geometry(&igadd::io::write_geometry(&patch)).unwrap();
            assert_eq!(again, patch);
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = igadd::config::CaseConfig::parse(text) {
            let again = igadd::config::CaseConfig::parse(&config.to_text()).unwrap();
            assert_eq!(again, config);
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Schema rejection and parameter validation must never panic.
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = pco_core::io::parse_params_str(text);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // The parser must reject arbitrary input without panicking.
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = pco_core::parse_pctl(text);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use pco_core::io::explicit::{
    parse_explicit, parse_lab, parse_srew, parse_sta, parse_tra, parse_trew, ExportBundle,
};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Every section parser must reject malformed input without panicking.
    let _ = parse_tra(text);
    let _ = parse_sta(text);
    let _ = parse_lab(text);
    let _ = parse_srew(text);
    let _ = parse_trew(text);
    // Inputs with two `---` separators drive the whole-bundle path.
    if let Some((tra, rest)) = text.split_once("\n---\n") {
        if let Some((sta, lab)) = rest.split_once("\n---\n") {
            let bundle = ExportBundle {
                tra: tra.to_string(),
                sta: sta.to_string(),
                lab: lab.to_string(),
                srew: None,
                trew: None,
            };
            let _ = parse_explicit(&bundle);
        }
    }
});

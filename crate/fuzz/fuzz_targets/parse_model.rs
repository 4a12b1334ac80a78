#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = fgf_core::model::parse_model(s) {
            // Anything that parses must survive validation and a text round trip.
            let _ = fgf_core::model::validate(&m);
            let again = fgf_core::model::parse_model(&m.to_model_text()).expect("canonical text parses");
            assert_eq!(again.model_id(), m.model_id());
        }
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = fgf_core::campaign::parse_campaign_config(s);
        for line in s.lines() {
            let _ = fgf_core::campaign::parse_action(line);
        }
    }
});

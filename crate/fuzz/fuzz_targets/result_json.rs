#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = fgf_core::knowledge::IsolationReport::from_json(s);
        let _ = fgf_core::campaign::CampaignResult::from_json(s);
        let _ = fgf_core::depgraph::WeightVector::parse(s);
        let _ = fgf_core::model::parse_number(s);
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(plan) = fgf_core::planner::FuzzPlan::from_jsonl(s) {
            let back = fgf_core::planner::FuzzPlan::from_jsonl(&plan.to_jsonl()).expect("written plan parses");
            assert_eq!(back, plan);
        }
    }
});

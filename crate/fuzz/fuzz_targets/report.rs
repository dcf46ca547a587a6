#![no_main]

use libfuzzer_sys::fuzz_target;
use unisplit::stats::EstimateReport;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = serde_json::from_slice::<EstimateReport>(data) {
        let text = serde_json::to_string(&r).unwrap();
        let _: EstimateReport = serde_json::from_str(&text).expect("serialized report parses");
    }
});

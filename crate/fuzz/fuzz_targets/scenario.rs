#![no_main]

use libfuzzer_sys::fuzz_target;
use unisplit::scenario::{parse_scenario, parse_scenario_with, DbConvention};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_scenario_with(text, Some(DbConvention::Amplitude20));
    if let Ok(sc) = parse_scenario(text) {
        // decibel inputs come back out in natural units, so one more pass must be a fixed point
        let again = parse_scenario(&sc.to_json()).expect("serialized scenario parses");
        assert_eq!(again.to_json(), parse_scenario(&again.to_json()).unwrap().to_json());
        for (_, problem) in sc.row_problems().unwrap() {
            assert_eq!(problem.dim(), sc.problem.dim());
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use unisplit::sched::LevelMethod;
use unisplit::split::LevelSchedule;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = serde_json::from_slice::<LevelSchedule>(data) {
        let t = s.times();
        assert!(!t.is_empty());
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*t.last().unwrap(), 1.0);
        assert!(s.p_bar() > 0.0 && s.p_bar() < 1.0);
    }
    let _ = serde_json::from_slice::<LevelMethod>(data);
});

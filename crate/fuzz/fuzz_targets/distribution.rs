#![no_main]

use libfuzzer_sys::fuzz_target;
use unisplit::dist::DistributionSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<DistributionSpec>(data) else { return };
    if spec.validate().is_err() {
        return;
    }
    for x in [-1.0, 0.0, 0.5, 1.0, 3.0, 1e6] {
        let p = spec.cdf(x);
        assert!((0.0..=1.0).contains(&p), "{spec:?} cdf({x}) = {p}");
        let h = spec.neg_log_sf(x);
        assert!(h >= 0.0 || h.is_nan(), "{spec:?} neg_log_sf({x}) = {h}");
    }
    for p in [1e-300, 1e-10, 0.3, 0.5, 0.9] {
        let _ = spec.quantile(p);
    }
});

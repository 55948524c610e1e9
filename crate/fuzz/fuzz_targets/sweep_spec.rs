#![no_main]

use cvqkd::experiments::{estimate_cost, SweepSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = SweepSpec::from_json(text) else { return };
    let _ = estimate_cost(&spec);
    let again = SweepSpec::from_json(&serde_json::to_string(&spec).unwrap()).expect("accepted spec re-parses");
    assert_eq!(spec, again);
});

#![no_main]

use cvqkd::experiments::parse_records;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_records(text) {
        let again = parse_records(&serde_json::to_string(&records).unwrap()).expect("records re-parse");
        assert_eq!(records, again);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use perbranch::region::parse_point;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(x) = parse_point(text) {
        assert!(!x.is_empty() && x.iter().all(|v| v.is_finite()));
    }
});

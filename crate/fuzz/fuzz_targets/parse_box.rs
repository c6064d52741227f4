#![no_main]

use libfuzzer_sys::fuzz_target;
use perbranch::region::BoxRegion;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(b) = text.parse::<BoxRegion>() else {
        return;
    };
    assert!(b.lo().iter().zip(b.hi()).all(|(l, h)| l < h));
    assert_eq!(b.to_string().parse::<BoxRegion>().unwrap(), b);
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use perbranch::config::ProblemConfig;
use perbranch::fields::validate;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = ProblemConfig::from_toml_str(text) else {
        return;
    };
    let Ok(spec) = config.build() else { return };
    let _ = validate(&spec);
    // Whatever builds must survive a round trip with the same hash.
    let resolved = spec.config().expect("built from a config");
    let again = ProblemConfig::from_toml_str(&resolved.to_toml_string().unwrap()).unwrap();
    assert_eq!(again.build().unwrap().spec_hash(), spec.spec_hash());
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use pshopt::harness::{validate_spec, ExperimentSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = serde_json::from_str::<ExperimentSpec>(text) else { return };
    // Validation must never panic, and a spec that validates must survive a
    // serde round trip.
    if validate_spec(&spec).is_ok() {
        let text = serde_json::to_string(&spec).unwrap();
        let again: ExperimentSpec = serde_json::from_str(&text).unwrap();
        validate_spec(&again).unwrap();
    }
});

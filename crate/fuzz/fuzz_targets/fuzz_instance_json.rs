#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(inst) = pshopt::instance::load_instance(text) else { return };
    // Whatever parses must survive validation and round-trip the canonical
    // JSON form without changing its content hash.
    let _ = pshopt::instance::validate(&inst);
    if let Ok(again) = pshopt::instance::load_instance(&inst.to_json().to_string()) {
        assert_eq!(inst.content_hash(), again.content_hash());
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use lvhba::solver::Trace;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(trace) = Trace::from_json(text) {
        let written = trace.to_json();
        let again = Trace::from_json(&written).expect("written trace parses");
        assert_eq!(again.to_json(), written);
    }
});

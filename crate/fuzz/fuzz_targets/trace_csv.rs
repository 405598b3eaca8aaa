#![no_main]

use libfuzzer_sys::fuzz_target;
use lvhba::solver::trace::{csv_string, read_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_csv(data) {
        let written = csv_string(&records);
        let again = read_csv(written.as_bytes()).expect("written trace parses");
        assert_eq!(csv_string(&again), written);
    }
});

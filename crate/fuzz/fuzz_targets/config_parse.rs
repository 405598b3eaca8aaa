#![no_main]

use libfuzzer_sys::fuzz_target;
use lvhba::cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::parse(text) {
        // The canonical text form must parse back to the same configuration.
        let canonical = config.to_config_text();
        let again = RunConfig::parse(&canonical).expect("canonical config text parses");
        assert_eq!(again.to_config_text(), canonical);
    }
});

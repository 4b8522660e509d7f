#![no_main]

use damformer::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    let Ok(text) = std::str::from_utf8(bytes) else { return };
    if let Ok(run) = RunConfig::parse(text) {
        let back = RunConfig::parse(&run.to_text()).expect("printed config parses");
        assert_eq!(back.to_text(), run.to_text());
    }
});

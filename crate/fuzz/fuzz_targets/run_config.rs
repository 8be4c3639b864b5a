#![no_main]
use libfuzzer_sys::fuzz_target;
use uncq::pipeline::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::from_json(text) {
        let _ = config.validate();
        let again = RunConfig::from_json(&config.to_value().to_string()).unwrap();
        assert_eq!(again, config);
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use uncq::attribution::parse_digest_records;
use uncq::report::to_jsonl;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_digest_records(text) {
        let again = parse_digest_records(&to_jsonl(&records).unwrap()).unwrap();
        assert_eq!(again, records);
    }
});

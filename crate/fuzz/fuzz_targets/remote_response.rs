#![no_main]
use libfuzzer_sys::fuzz_target;
use uncq::classifier::decode_response;

fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let (rows, classes) = (data[0] as usize % 8, data[1] as usize % 6);
    let Ok(body) = std::str::from_utf8(&data[2..]) else { return };
    if let Ok(logits) = decode_response(body, rows, classes) {
        assert_eq!(logits.len(), rows);
        assert!(logits.iter().all(|l| l.len() == classes && l.values().iter().all(|v| v.is_finite())));
    }
});

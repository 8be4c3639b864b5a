#![no_main]
use libfuzzer_sys::fuzz_target;
use uncq::classifier::BagOfWordsModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = BagOfWordsModel::from_json(text) {
        let saved = model.to_json();
        let reloaded = BagOfWordsModel::from_json(&saved).unwrap();
        assert_eq!(reloaded.to_json(), saved);
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use uncq::corpus::{parse_corpus, CorpusFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(corpus) = parse_corpus(text, CorpusFormat::Csv, true) {
        assert!(corpus.examples.iter().all(|e| e.gold_label.unwrap() < corpus.num_classes()));
    }
});

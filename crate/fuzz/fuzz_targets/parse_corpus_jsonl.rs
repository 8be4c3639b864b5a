#![no_main]
use libfuzzer_sys::fuzz_target;
use uncq::corpus::{parse_corpus, to_jsonl, CorpusFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(corpus) = parse_corpus(text, CorpusFormat::Jsonl, false) {
        let again = parse_corpus(&to_jsonl(&corpus), CorpusFormat::Jsonl, false).unwrap();
        assert_eq!(again.examples, corpus.examples);
    }
});

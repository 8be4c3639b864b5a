#![no_main]
use libfuzzer_sys::fuzz_target;
use uncq::corpus::tokenize;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for lowercase in [false, true] {
        let tokens = tokenize(text, lowercase);
        assert!(tokens.iter().all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)));
        // Tokenizing the space-joined tokens is a fixed point.
        assert_eq!(tokenize(&tokens.join(" "), lowercase), tokens);
    }
});

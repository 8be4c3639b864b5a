//! Generated corpora with known structure, for demos and tests.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{Corpus, LabelSpace, TokenizedExample};
use crate::rng;

pub const POSITIVE_WORDS: [&str; 10] = [
    "great", "wonderful", "superb", "delightful", "brilliant", "charming", "moving", "fresh",
    "gripping", "lovely",
];
pub const NEGATIVE_WORDS: [&str; 10] = [
    "awful", "dreadful", "boring", "clumsy", "tedious", "bland", "messy", "hollow", "weak",
    "stale",
];
pub const NEUTRAL_WORDS: [&str; 16] = [
    "the", "film", "a", "story", "it", "was", "cast", "plot", "and", "of", "scene", "with",
    "director", "this", "ending", "music",
];

/// Knobs for [`mixed_polarity_corpus`].
#[derive(Debug, Clone)]
pub struct MixedPolarity {
    pub documents: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Token added to some positive documents and never to negative ones.
    pub positive_marker: Option<String>,
    pub marker_rate: f64,
    pub seed: u64,
}

impl Default for MixedPolarity {
    fn default() -> Self {
        MixedPolarity {
            documents: 2000,
            min_len: 8,
            max_len: 16,
            positive_marker: None,
            marker_rate: 0.5,
            seed: 17,
        }
    }
}

/// Two-class sentiment-like corpus (`neg`, `pos`). Every document contains
/// at least one positive and one negative word; the label leans toward the
/// majority polarity but stays noisy.
pub fn mixed_polarity_corpus(spec: &MixedPolarity) -> Corpus {
    let mut rng = rng::seeded(spec.seed);
    let labels = LabelSpace::new(vec!["neg".into(), "pos".into()]).expect("distinct labels");
    let examples = (0..spec.documents)
        .map(|i| {
            let positive = rng.random_bool(0.5);
            let agree = rng.random_range(0.55..0.9);
            let len = rng.random_range(spec.min_len..=spec.max_len.max(spec.min_len));
            let mut tokens: Vec<String> = Vec::with_capacity(len + 3);
            tokens.push(POSITIVE_WORDS.choose(&mut rng).unwrap().to_string());
            tokens.push(NEGATIVE_WORDS.choose(&mut rng).unwrap().to_string());
            while tokens.len() < len {
                let word = if rng.random_bool(0.5) {
                    NEUTRAL_WORDS.choose(&mut rng).unwrap()
                } else if rng.random_bool(agree) == positive {
                    POSITIVE_WORDS.choose(&mut rng).unwrap()
                } else {
                    NEGATIVE_WORDS.choose(&mut rng).unwrap()
                };
                tokens.push(word.to_string());
            }
            if let Some(marker) = &spec.positive_marker {
                if positive && rng.random_bool(spec.marker_rate) {
                    tokens.push(marker.clone());
                }
            }
            // Shuffle so the forced words are not always first.
            use rand::seq::SliceRandom;
            tokens.shuffle(&mut rng);
            TokenizedExample {
                id: format!("doc-{i:05}"),
                tokens,
                gold_label: Some(positive as usize),
            }
        })
        .collect();
    Corpus::new(labels, examples).expect("generated ids are unique")
}

/// Two-class corpus where the class is exactly the presence of a marker
/// token (`yes` for class 1), padded with shared filler words.
pub fn marker_corpus(documents: usize, seed: u64) -> Corpus {
    let mut rng = rng::seeded(seed);
    let labels = LabelSpace::new(vec!["without".into(), "with".into()]).expect("distinct labels");
    let examples = (0..documents)
        .map(|i| {
            let marked = rng.random_bool(0.5);
            let len = rng.random_range(4..10);
            let mut tokens: Vec<String> = (0..len)
                .map(|_| NEUTRAL_WORDS.choose(&mut rng).unwrap().to_string())
                .collect();
            if marked {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, "yes".into());
            }
            TokenizedExample {
                id: format!("m{i:05}"),
                tokens,
                gold_label: Some(marked as usize),
            }
        })
        .collect();
    Corpus::new(labels, examples).expect("generated ids are unique")
}

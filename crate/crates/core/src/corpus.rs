//! Labeled corpora: tokenization, JSONL/CSV ingestion, splits and vocabularies.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One input text as an ordered word sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub id: String,
    pub tokens: Vec<String>,
    pub gold_label: Option<usize>,
}

impl TokenizedExample {
    pub fn token_refs(&self) -> Vec<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }
}

/// Ordered class names. Index `c` of a name is its class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate label `{name}`")));
            }
        }
        Ok(LabelSpace { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> Option<&str> {
        self.names.get(class).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn intern(&mut self, name: &str) -> usize {
        match self.index_of(name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub label_space: LabelSpace,
    pub examples: Vec<TokenizedExample>,
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness and label bounds.
    pub fn new(label_space: LabelSpace, examples: Vec<TokenizedExample>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if !ids.insert(ex.id.as_str()) {
                return Err(Error::invalid(format!("duplicate example id `{}`", ex.id)));
            }
            if let Some(label) = ex.gold_label {
                if label >= label_space.len() {
                    return Err(Error::invalid(format!(
                        "example `{}` has label {label} outside {} classes",
                        ex.id,
                        label_space.len()
                    )));
                }
            }
        }
        Ok(Corpus {
            label_space,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_space.len()
    }

    pub fn average_length(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        let total: usize = self.examples.iter().map(|e| e.tokens.len()).sum();
        total as f64 / self.examples.len() as f64
    }

    pub fn get(&self, id: &str) -> Option<&TokenizedExample> {
        self.examples.iter().find(|e| e.id == id)
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'..='\u{201F}' | '\u{2010}'..='\u{2015}' | '\u{2026}' | '«' | '»' | '¡' | '¿'
        )
}

/// Splits on Unicode whitespace, then peels leading and trailing punctuation
/// off each chunk as single-character tokens. Interior punctuation stays.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let start = chars.iter().position(|c| !is_punct(*c));
        let Some(start) = start else {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        };
        let end = chars.iter().rposition(|c| !is_punct(*c)).unwrap() + 1;
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        let word: String = chars[start..end].iter().collect();
        out.push(if lowercase { word.to_lowercase() } else { word });
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusFormat::Jsonl => f.write_str("jsonl"),
            CorpusFormat::Csv => f.write_str("csv"),
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    text: String,
    label: String,
    #[serde(default)]
    id: Option<String>,
}

struct Builder {
    lowercase: bool,
    labels: LabelSpace,
    examples: Vec<TokenizedExample>,
    ids: HashSet<String>,
}

impl Builder {
    fn new(lowercase: bool) -> Self {
        Builder {
            lowercase,
            labels: LabelSpace { names: Vec::new() },
            examples: Vec::new(),
            ids: HashSet::new(),
        }
    }

    fn push(&mut self, line: u64, record: RawRecord) -> Result<()> {
        let id = record.id.unwrap_or_else(|| line.to_string());
        if !self.ids.insert(id.clone()) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate id `{id}`"),
            });
        }
        let gold = self.labels.intern(&record.label);
        self.examples.push(TokenizedExample {
            id,
            tokens: tokenize(&record.text, self.lowercase),
            gold_label: Some(gold),
        });
        Ok(())
    }

    fn finish(self) -> Corpus {
        Corpus {
            label_space: self.labels,
            examples: self.examples,
        }
    }
}

/// Parses corpus text already in memory. Blank JSONL lines are skipped.
pub fn parse_corpus(input: &str, format: CorpusFormat, lowercase: bool) -> Result<Corpus> {
    let mut builder = Builder::new(lowercase);
    match format {
        CorpusFormat::Jsonl => {
            for (idx, line) in input.lines().enumerate() {
                let line_no = idx as u64 + 1;
                if line.trim().is_empty() {
                    continue;
                }
                let record: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                builder.push(line_no, record)?;
            }
        }
        CorpusFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(input.as_bytes());
            let headers = reader
                .headers()
                .map_err(|e| Error::Parse {
                    line: 1,
                    message: e.to_string(),
                })?
                .clone();
            for column in ["text", "label"] {
                if !headers.iter().any(|h| h == column) {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("missing column `{column}`"),
                    });
                }
            }
            for row in reader.records() {
                let row = row.map_err(|e| Error::Parse {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                })?;
                let line_no = row.position().map_or(0, |p| p.line());
                let record: RawRecord =
                    row.deserialize(Some(&headers)).map_err(|e| Error::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                builder.push(line_no, record)?;
            }
        }
    }
    Ok(builder.finish())
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat, lowercase: bool) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, format, lowercase)
}

/// JSONL with tokens joined by single spaces. Reloading it reproduces ids,
/// tokens and label names; label indices follow first appearance.
pub fn to_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    for ex in &corpus.examples {
        let label = ex
            .gold_label
            .and_then(|g| corpus.label_space.name(g))
            .unwrap_or_default();
        let line = serde_json::json!({ "id": ex.id, "text": ex.tokens.join(" "), "label": label });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

/// Proportions for train/dev/test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self> {
        let ratios = SplitRatios { train, dev, test };
        ratios.validate()?;
        Ok(ratios)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::invalid("split ratios must be non-negative"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

/// Seeded shuffle, then dev and test take `floor(n * ratio)` examples each
/// and train takes the remainder.
pub fn split_corpus(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("cannot split an empty corpus"));
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));

    let n_dev = (n as f64 * ratios.dev).floor() as usize;
    let n_test = (n as f64 * ratios.test).floor() as usize;
    let n_train = n - n_dev - n_test;

    let take = |idx: &[usize]| Corpus {
        label_space: corpus.label_space.clone(),
        examples: idx.iter().map(|&i| corpus.examples[i].clone()).collect(),
    };
    Ok(Split {
        train: take(&order[..n_train]),
        dev: take(&order[n_train..n_train + n_dev]),
        test: take(&order[n_train + n_dev..]),
    })
}

/// Token ids are dense, ordered by descending corpus frequency with ties
/// broken lexicographically.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn count(&self, id: usize) -> Option<u64> {
        self.counts.get(id).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// 1-based rank by frequency.
    pub fn frequency_rank(&self, id: usize) -> usize {
        id + 1
    }
}

pub fn build_vocab(corpus: &Corpus, min_count: u64) -> Vocabulary {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for ex in &corpus.examples {
        for tok in &ex.tokens {
            *freq.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut entries: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let tokens: Vec<String> = entries.iter().map(|(t, _)| t.to_string()).collect();
    let counts = entries.iter().map(|(_, c)| *c).collect();
    let index = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Vocabulary {
        tokens,
        counts,
        index,
    }
}

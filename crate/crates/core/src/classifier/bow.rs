use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Classifier, Logits};
use crate::corpus::{Corpus, LabelSpace};
use crate::error::{Error, Result};

/// Multinomial Naive Bayes over word counts.
///
/// `logit_c = log_prior_c + sum over in-vocabulary tokens of weight_c(token)`.
/// Out-of-vocabulary tokens contribute nothing, so the empty input scores as
/// the log-priors.
#[derive(Debug, Clone, PartialEq)]
pub struct BagOfWordsModel {
    label_space: LabelSpace,
    log_priors: Vec<f64>,
    weights: HashMap<String, Vec<f64>>,
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Persisted {
    label_space: LabelSpace,
    log_priors: Vec<f64>,
    weights: BTreeMap<String, Vec<f64>>,
    alpha: f64,
}

impl BagOfWordsModel {
    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, token: &str) -> Option<&[f64]> {
        self.weights.get(token).map(Vec::as_slice)
    }

    /// Single JSON document; token weights are written in sorted order so
    /// equal models serialize to equal bytes.
    pub fn to_json(&self) -> String {
        let doc = Persisted {
            label_space: self.label_space.clone(),
            log_priors: self.log_priors.clone(),
            weights: self
                .weights
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            alpha: self.alpha,
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Persisted = serde_json::from_str(text)?;
        let classes = doc.label_space.len();
        if classes < 2 {
            return Err(Error::Model(format!("model has {classes} classes, need at least 2")));
        }
        if doc.log_priors.len() != classes {
            return Err(Error::Model("log_priors length differs from label space".into()));
        }
        if !(doc.alpha.is_finite() && doc.alpha > 0.0) {
            return Err(Error::Model(format!("alpha must be positive, got {}", doc.alpha)));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&doc.log_priors) {
            return Err(Error::Model("non-finite log prior".into()));
        }
        for (token, row) in &doc.weights {
            if row.len() != classes || !finite(row) {
                return Err(Error::Model(format!("bad weight row for token `{token}`")));
            }
        }
        Ok(BagOfWordsModel {
            label_space: doc.label_space,
            log_priors: doc.log_priors,
            weights: doc.weights.into_iter().collect(),
            alpha: doc.alpha,
        })
    }

    fn score(&self, tokens: &[&str]) -> Vec<f64> {
        // Summing in sorted token order makes the logits exactly invariant
        // under permutation of the input.
        let mut rows: Vec<(&str, &Vec<f64>)> = tokens
            .iter()
            .filter_map(|t| self.weights.get(*t).map(|row| (*t, row)))
            .collect();
        rows.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let mut logits = self.log_priors.clone();
        for (_, row) in rows {
            for (l, w) in logits.iter_mut().zip(row) {
                *l += w;
            }
        }
        logits
    }
}

impl Classifier for BagOfWordsModel {
    fn num_classes(&self) -> usize {
        self.label_space.len()
    }

    fn logits_batch(&self, inputs: &[Vec<&str>]) -> Result<Vec<Logits>> {
        inputs.iter().map(|t| Logits::new(self.score(t))).collect()
    }
}

/// Fits multinomial Naive Bayes with additive smoothing `alpha`.
pub fn train_bow(train: &Corpus, alpha: f64) -> Result<BagOfWordsModel> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let classes = train.num_classes();
    if classes < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 classes to train, found {classes}"
        )));
    }
    if train.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }

    let mut docs_per_class = vec![0u64; classes];
    let mut token_counts: HashMap<&str, Vec<u64>> = HashMap::new();
    let mut tokens_per_class = vec![0u64; classes];
    for ex in &train.examples {
        let label = ex
            .gold_label
            .ok_or_else(|| Error::invalid(format!("example `{}` has no gold label", ex.id)))?;
        docs_per_class[label] += 1;
        for tok in &ex.tokens {
            token_counts
                .entry(tok.as_str())
                .or_insert_with(|| vec![0; classes])[label] += 1;
            tokens_per_class[label] += 1;
        }
    }
    if let Some(empty) = docs_per_class.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!(
            "class `{}` has no training examples",
            train.label_space.name(empty).unwrap_or("?")
        )));
    }

    let n = train.len() as f64;
    let vocab = token_counts.len() as f64;
    let log_priors = docs_per_class
        .iter()
        .map(|&c| (c as f64 / n).ln())
        .collect();
    let denominators: Vec<f64> = tokens_per_class
        .iter()
        .map(|&total| total as f64 + alpha * vocab)
        .collect();
    let weights = token_counts
        .into_iter()
        .map(|(tok, counts)| {
            let row = counts
                .iter()
                .zip(&denominators)
                .map(|(&c, d)| ((c as f64 + alpha) / d).ln())
                .collect();
            (tok.to_string(), row)
        })
        .collect();

    Ok(BagOfWordsModel {
        label_space: train.label_space.clone(),
        log_priors,
        weights,
        alpha,
    })
}

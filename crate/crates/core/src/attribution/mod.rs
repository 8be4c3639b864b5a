//! Per-word contribution scores and the important/uncertain word split.
//!
//! Every score is a change in the probability of the class predicted on the
//! *full* input. Positive scores support that prediction; negative scores
//! mark words whose removal would raise its confidence.

mod loo;
mod shapley;

pub use loo::loo_attribution;
pub use shapley::{exact_shapley_attribution, sampling_shapley_attribution, DEFAULT_MAX_EXACT};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{Calibrated, Classifier};
use crate::corpus::TokenizedExample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "loo")]
    Loo,
    #[serde(rename = "sampling-shapley")]
    SamplingShapley,
    #[serde(rename = "exact-shapley")]
    ExactShapley,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Loo => "loo",
            Method::SamplingShapley => "sampling-shapley",
            Method::ExactShapley => "exact-shapley",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loo" => Ok(Method::Loo),
            "ss" | "sampling-shapley" => Ok(Method::SamplingShapley),
            "exact" | "exact-shapley" => Ok(Method::ExactShapley),
            other => Err(Error::invalid(format!("unknown attribution method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributionMeta {
    #[serde(rename = "M", skip_serializing_if = "Option::is_none", default)]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// Coalition sampling scheme, recorded for sampled estimates.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sampler: Option<String>,
    pub temperature: f64,
    /// Distinct model evaluations used.
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub example_id: String,
    pub method: Method,
    pub predicted_class: usize,
    pub base_confidence: f64,
    pub scores: Vec<f64>,
    pub meta: AttributionMeta,
}

/// Which explainer to run, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Explainer {
    Loo,
    SamplingShapley { samples: usize, seed: u64 },
    ExactShapley { max_n: usize },
}

impl Explainer {
    pub fn method(&self) -> Method {
        match self {
            Explainer::Loo => Method::Loo,
            Explainer::SamplingShapley { .. } => Method::SamplingShapley,
            Explainer::ExactShapley { .. } => Method::ExactShapley,
        }
    }

    pub fn explain<M: Classifier>(
        &self,
        model: &Calibrated<M>,
        example: &TokenizedExample,
    ) -> Result<Attribution> {
        match *self {
            Explainer::Loo => loo_attribution(model, example),
            Explainer::SamplingShapley { samples, seed } => {
                sampling_shapley_attribution(model, example, samples, seed)
            }
            Explainer::ExactShapley { max_n } => exact_shapley_attribution(model, example, max_n),
        }
    }
}

/// Order-preserving subsequence with `positions` deleted.
pub fn remove_positions<'a, S: AsRef<str>>(
    tokens: &'a [S],
    positions: &BTreeSet<usize>,
) -> Result<Vec<&'a str>> {
    if let Some(&bad) = positions.iter().find(|&&p| p >= tokens.len()) {
        return Err(Error::invalid(format!(
            "position {bad} out of range for {} tokens",
            tokens.len()
        )));
    }
    Ok(tokens
        .iter()
        .enumerate()
        .filter(|(i, _)| !positions.contains(i))
        .map(|(_, t)| t.as_ref())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub position: usize,
    pub token: String,
    pub score: f64,
}

/// Label explanation (`important`) and uncertainty explanation
/// (`uncertain`) for one prediction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplanationDigest {
    pub important: Vec<WordScore>,
    pub uncertain: Vec<WordScore>,
}

impl ExplanationDigest {
    pub fn uncertain_positions(&self, k: usize) -> BTreeSet<usize> {
        self.uncertain.iter().take(k).map(|w| w.position).collect()
    }

    pub fn important_positions(&self, k: usize) -> BTreeSet<usize> {
        self.important.iter().take(k).map(|w| w.position).collect()
    }
}

/// Up to `k_imp` strictly positive scores (largest first) and up to `k_unc`
/// strictly negative scores (most negative first). Ties go to the earlier
/// position.
pub fn make_digest<S: AsRef<str>>(
    attr: &Attribution,
    tokens: &[S],
    k_imp: usize,
    k_unc: usize,
) -> Result<ExplanationDigest> {
    if attr.scores.len() != tokens.len() {
        return Err(Error::invalid(format!(
            "attribution has {} scores for {} tokens",
            attr.scores.len(),
            tokens.len()
        )));
    }
    let entry = |i: usize| WordScore {
        position: i,
        token: tokens[i].as_ref().to_string(),
        score: attr.scores[i],
    };

    let mut positive: Vec<usize> = (0..tokens.len()).filter(|&i| attr.scores[i] > 0.0).collect();
    positive.sort_by(|&a, &b| attr.scores[b].total_cmp(&attr.scores[a]).then(a.cmp(&b)));
    let mut negative: Vec<usize> = (0..tokens.len()).filter(|&i| attr.scores[i] < 0.0).collect();
    negative.sort_by(|&a, &b| attr.scores[a].total_cmp(&attr.scores[b]).then(a.cmp(&b)));

    Ok(ExplanationDigest {
        important: positive.into_iter().take(k_imp).map(entry).collect(),
        uncertain: negative.into_iter().take(k_unc).map(entry).collect(),
    })
}

/// Default number of words per group: 10 for long documents (average over
/// 100 tokens), 5 otherwise.
pub fn default_k(average_length: f64) -> usize {
    if average_length > 100.0 {
        10
    } else {
        5
    }
}

/// One line of `digests.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigestRecord {
    pub example_id: String,
    pub predicted_class: usize,
    pub confidence: f64,
    #[serde(default)]
    pub gold_label: Option<usize>,
    #[serde(flatten)]
    pub digest: ExplanationDigest,
}

/// Parses `digests.jsonl` content; blank lines are skipped.
pub fn parse_digest_records(input: &str) -> Result<Vec<DigestRecord>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parses `attributions.jsonl` content; blank lines are skipped.
pub fn parse_attributions(input: &str) -> Result<Vec<Attribution>> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

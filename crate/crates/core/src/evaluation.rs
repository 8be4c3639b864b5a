//! Removal experiments: delete the top uncertain (or important) words of
//! each explanation and measure how the predicted-class probability moves,
//! grouped by original confidence.

use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{make_digest, remove_positions, Explainer, Method};
use crate::classifier::{Calibrated, Classifier};
use crate::corpus::{Corpus, TokenizedExample};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalGroup {
    Uncertain,
    Important,
}

impl fmt::Display for RemovalGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemovalGroup::Uncertain => "uncertain",
            RemovalGroup::Important => "important",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_original: Option<f64>,
    pub mean_post: Option<f64>,
    pub mean_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleDelta {
    pub example_id: String,
    pub predicted_class: usize,
    pub original: f64,
    pub post: f64,
    pub delta: f64,
    pub removed: Vec<usize>,
    /// Argmax after removal differs from the original prediction.
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceChangeReport {
    pub method: Method,
    pub group: RemovalGroup,
    pub k: usize,
    pub seed: u64,
    pub bin_edges: Vec<f64>,
    pub bins: Vec<ConfidenceBin>,
    pub overall_mean_delta: f64,
    pub sample_size: usize,
    /// Examples kept with delta 0 because they had no word in the group.
    pub without_removable_words: usize,
    pub flip_rate: f64,
    pub examples: Vec<ExampleDelta>,
}

impl ConfidenceChangeReport {
    /// One row per bin: `lower,upper,count,mean_orig,mean_post,mean_delta`.
    /// Empty bins leave the means blank.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["lower", "upper", "count", "mean_orig", "mean_post", "mean_delta"])
            .expect("in-memory csv");
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            w.write_record([
                b.lower.to_string(),
                b.upper.to_string(),
                b.count.to_string(),
                fmt(b.mean_original),
                fmt(b.mean_post),
                fmt(b.mean_delta),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

/// `count` equal-width bins over `(1/C, 1]`.
pub fn default_bin_edges(num_classes: usize, count: usize) -> Vec<f64> {
    let lo = 1.0 / num_classes.max(1) as f64;
    let width = (1.0 - lo) / count.max(1) as f64;
    (0..=count.max(1))
        .map(|j| if j == count.max(1) { 1.0 } else { lo + j as f64 * width })
        .collect()
}

/// Checks that `edges` has at least two finite, strictly increasing values.
pub fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::invalid("need at least two bin edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("bin edges must be finite and strictly increasing"));
    }
    Ok(())
}

/// Bin `j` covers `(edges[j], edges[j+1]]`; the first bin includes its lower edge.
fn bin_of(edges: &[f64], conf: f64) -> Option<usize> {
    if conf < edges[0] || conf > edges[edges.len() - 1] {
        return None;
    }
    (0..edges.len() - 1).find(|&j| conf <= edges[j + 1])
}

/// Parameters shared by both removal experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalConfig {
    pub explainer: Explainer,
    pub k: usize,
    pub bin_edges: Vec<f64>,
    pub seed: u64,
    pub sample_size: usize,
}

/// Deletes up to `k_unc` uncertain words per sampled example.
pub fn confidence_change_experiment<M: Classifier>(
    model: &Calibrated<M>,
    sample: &Corpus,
    explainer: Explainer,
    k_unc: usize,
    bin_edges: &[f64],
    seed: u64,
    sample_size: usize,
) -> Result<ConfidenceChangeReport> {
    removal_experiment(
        model,
        sample,
        RemovalGroup::Uncertain,
        &RemovalConfig {
            explainer,
            k: k_unc,
            bin_edges: bin_edges.to_vec(),
            seed,
            sample_size,
        },
    )
}

/// The converse check: deletes up to `k_imp` important words, which should
/// lower confidence or flip the label.
pub fn important_removal_check<M: Classifier>(
    model: &Calibrated<M>,
    sample: &Corpus,
    explainer: Explainer,
    k_imp: usize,
    bin_edges: &[f64],
    seed: u64,
    sample_size: usize,
) -> Result<ConfidenceChangeReport> {
    removal_experiment(
        model,
        sample,
        RemovalGroup::Important,
        &RemovalConfig {
            explainer,
            k: k_imp,
            bin_edges: bin_edges.to_vec(),
            seed,
            sample_size,
        },
    )
}

/// Seeded choice of `sample_size` non-empty examples.
pub fn select_examples(sample: &Corpus, seed: u64, sample_size: usize) -> Result<Vec<&TokenizedExample>> {
    let eligible: Vec<&TokenizedExample> =
        sample.examples.iter().filter(|e| !e.tokens.is_empty()).collect();
    if eligible.is_empty() {
        return Err(Error::invalid("no non-empty examples to evaluate"));
    }
    if sample_size > eligible.len() {
        return Err(Error::invalid(format!(
            "sample size {sample_size} exceeds {} available examples",
            eligible.len()
        )));
    }
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    Ok(order[..sample_size].iter().map(|&i| eligible[i]).collect())
}

pub fn removal_experiment<M: Classifier>(
    model: &Calibrated<M>,
    sample: &Corpus,
    group: RemovalGroup,
    config: &RemovalConfig,
) -> Result<ConfidenceChangeReport> {
    validate_edges(&config.bin_edges)?;
    if sample.is_empty() {
        return Err(Error::invalid("evaluation sample is empty"));
    }
    let chosen = select_examples(sample, config.seed, config.sample_size)?;

    let examples = chosen
        .par_iter()
        .map(|ex| measure(model, ex, group, config))
        .collect::<Result<Vec<_>>>()?;

    let edges = &config.bin_edges;
    let nbins = edges.len() - 1;
    let mut sums = vec![(0usize, 0.0, 0.0, 0.0); nbins];
    for ex in &examples {
        let b = bin_of(edges, ex.original).ok_or_else(|| {
            Error::invalid(format!(
                "confidence {} of `{}` falls outside the bin edges",
                ex.original, ex.example_id
            ))
        })?;
        let s = &mut sums[b];
        s.0 += 1;
        s.1 += ex.original;
        s.2 += ex.post;
        s.3 += ex.delta;
    }
    let bins = sums
        .iter()
        .enumerate()
        .map(|(j, &(count, orig, post, delta))| {
            let mean = |v: f64| (count > 0).then(|| v / count as f64);
            ConfidenceBin {
                lower: edges[j],
                upper: edges[j + 1],
                count,
                mean_original: mean(orig),
                mean_post: mean(post),
                mean_delta: mean(delta),
            }
        })
        .collect();

    let n = examples.len() as f64;
    Ok(ConfidenceChangeReport {
        method: config.explainer.method(),
        group,
        k: config.k,
        seed: config.seed,
        bin_edges: edges.clone(),
        bins,
        overall_mean_delta: examples.iter().map(|e| e.delta).sum::<f64>() / n,
        sample_size: examples.len(),
        without_removable_words: examples.iter().filter(|e| e.removed.is_empty()).count(),
        flip_rate: examples.iter().filter(|e| e.flipped).count() as f64 / n,
        examples,
    })
}

fn measure<M: Classifier>(
    model: &Calibrated<M>,
    example: &TokenizedExample,
    group: RemovalGroup,
    config: &RemovalConfig,
) -> Result<ExampleDelta> {
    let attr = config.explainer.explain(model, example)?;
    let digest = match group {
        RemovalGroup::Uncertain => make_digest(&attr, &example.tokens, 0, config.k)?,
        RemovalGroup::Important => make_digest(&attr, &example.tokens, config.k, 0)?,
    };
    let removed = match group {
        RemovalGroup::Uncertain => digest.uncertain_positions(config.k),
        RemovalGroup::Important => digest.important_positions(config.k),
    };

    // Re-predict from scratch rather than reusing attribution internals.
    let tokens = example.token_refs();
    let before = model.predict(&tokens)?;
    let class = before.predicted_class;
    let (post, flipped) = if removed.is_empty() {
        (before.confidence, false)
    } else {
        let after = model.predict(&remove_positions(&tokens, &removed)?)?;
        (after.probs[class], after.predicted_class != class)
    };
    Ok(ExampleDelta {
        example_id: example.id.clone(),
        predicted_class: class,
        original: before.confidence,
        post,
        delta: post - before.confidence,
        removed: removed.into_iter().collect(),
        flipped,
    })
}

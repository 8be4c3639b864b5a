//! Local mutual information between extracted words and labels.
//!
//! `LMI(e, y) = p(e, y) * ln(p(y | e) / p(y))`, with every probability
//! estimated from occurrence counts of the top words across many digests.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attribution::DigestRecord;
use crate::corpus::{LabelSpace, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Important,
    Uncertain,
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureGroup::Important => "important",
            FeatureGroup::Uncertain => "uncertain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelBasis {
    Predicted,
    Gold,
}

/// Occurrence counts `count(e, y)` with their marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTally {
    pub group: FeatureGroup,
    pub basis: LabelBasis,
    counts: BTreeMap<String, Vec<u64>>,
    label_totals: Vec<u64>,
    total: u64,
}

impl FeatureTally {
    pub fn new(group: FeatureGroup, basis: LabelBasis, num_classes: usize) -> Self {
        FeatureTally {
            group,
            basis,
            counts: BTreeMap::new(),
            label_totals: vec![0; num_classes],
            total: 0,
        }
    }

    pub fn add(&mut self, feature: &str, label: usize, times: u64) -> Result<()> {
        if label >= self.label_totals.len() {
            return Err(Error::invalid(format!(
                "label {label} outside {} classes",
                self.label_totals.len()
            )));
        }
        let classes = self.label_totals.len();
        self.counts
            .entry(feature.to_string())
            .or_insert_with(|| vec![0; classes])[label] += times;
        self.label_totals[label] += times;
        self.total += times;
        Ok(())
    }

    pub fn merge(&mut self, other: &FeatureTally) -> Result<()> {
        for (feature, row) in &other.counts {
            for (label, &c) in row.iter().enumerate() {
                if c > 0 {
                    self.add(feature, label, c)?;
                }
            }
        }
        Ok(())
    }

    pub fn count(&self, feature: &str, label: usize) -> u64 {
        self.counts
            .get(feature)
            .and_then(|r| r.get(label))
            .copied()
            .unwrap_or(0)
    }

    pub fn feature_total(&self, feature: &str) -> u64 {
        self.counts.get(feature).map_or(0, |r| r.iter().sum())
    }

    pub fn label_total(&self, label: usize) -> u64 {
        self.label_totals.get(label).copied().unwrap_or(0)
    }

    /// `|E|`, the number of feature occurrences.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn num_classes(&self) -> usize {
        self.label_totals.len()
    }

    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    /// Unnormalized `LMI(e, y)`; 0 when `count(e, y) = 0`.
    pub fn raw_lmi(&self, feature: &str, label: usize) -> f64 {
        let joint = self.count(feature, label);
        if joint == 0 || self.total == 0 {
            return 0.0;
        }
        let total = self.total as f64;
        let p_joint = joint as f64 / total;
        let p_label_given = joint as f64 / self.feature_total(feature) as f64;
        let p_label = self.label_total(label) as f64 / total;
        p_joint * (p_label_given / p_label).ln()
    }
}

/// Counts up to `top_n` words of `group` from every record, under the
/// label chosen by `basis`. Records without a gold label are skipped under
/// the gold basis.
pub fn tally_features(
    records: &[DigestRecord],
    group: FeatureGroup,
    basis: LabelBasis,
    top_n: usize,
    num_classes: usize,
) -> Result<FeatureTally> {
    let mut tally = FeatureTally::new(group, basis, num_classes);
    for rec in records {
        let label = match basis {
            LabelBasis::Predicted => rec.predicted_class,
            LabelBasis::Gold => match rec.gold_label {
                Some(g) => g,
                None => continue,
            },
        };
        let words = match group {
            FeatureGroup::Important => &rec.digest.important,
            FeatureGroup::Uncertain => &rec.digest.uncertain,
        };
        for w in words.iter().take(top_n) {
            tally.add(&w.token, label, 1)?;
        }
    }
    Ok(tally)
}

/// Normalized LMI over `(vocabulary token, label)`. Entries not stored are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiDistribution {
    pub group: FeatureGroup,
    pub num_classes: usize,
    /// `(token id, label) -> P_LMI`, positive values only.
    pub values: BTreeMap<(usize, usize), f64>,
    /// Raw values at or below zero, dropped before normalization.
    pub clamped_negative: usize,
    /// Extracted features absent from the vocabulary.
    pub out_of_vocabulary: usize,
}

impl LmiDistribution {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, token_id: usize, label: usize) -> f64 {
        self.values.get(&(token_id, label)).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.values.values().sum()
    }
}

/// Raw LMI for every tallied feature in the vocabulary; values at or below
/// zero are dropped, the rest scaled to sum to 1.
pub fn compute_lmi(tally: &FeatureTally, vocabulary: &Vocabulary) -> Result<LmiDistribution> {
    if tally.total() == 0 {
        return Err(Error::invalid("cannot compute LMI from an empty tally"));
    }
    let mut raw = BTreeMap::new();
    let mut clamped = 0;
    let mut oov = 0;
    for feature in tally.features() {
        let Some(id) = vocabulary.id(feature) else {
            oov += 1;
            continue;
        };
        for label in 0..tally.num_classes() {
            if tally.count(feature, label) == 0 {
                continue;
            }
            let v = tally.raw_lmi(feature, label);
            if v > 0.0 {
                raw.insert((id, label), v);
            } else {
                clamped += 1;
            }
        }
    }
    let total: f64 = raw.values().sum();
    let values = if total > 0.0 {
        raw.into_iter().map(|(k, v)| (k, v / total)).collect()
    } else {
        BTreeMap::new()
    };
    Ok(LmiDistribution {
        group: tally.group,
        num_classes: tally.num_classes(),
        values,
        clamped_negative: clamped,
        out_of_vocabulary: oov,
    })
}

/// Tokens with the `n` largest positive values for `label`; ties by
/// vocabulary id.
pub fn top_tokens<'v>(
    dist: &LmiDistribution,
    vocabulary: &'v Vocabulary,
    label: usize,
    n: usize,
) -> Vec<&'v str> {
    let mut entries: Vec<(usize, f64)> = dist
        .values
        .iter()
        .filter(|((_, l), v)| *l == label && **v > 0.0)
        .map(|(&(id, _), &v)| (id, v))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    entries
        .into_iter()
        .take(n)
        .filter_map(|(id, _)| vocabulary.token(id))
        .collect()
}

/// CSV rows `group,token,label,p_lmi,frequency_rank` for the nonzero entries
/// of each distribution, in `(group, token id, label)` order.
pub fn lmi_csv(
    distributions: &[&LmiDistribution],
    vocabulary: &Vocabulary,
    labels: &LabelSpace,
) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "token", "label", "p_lmi", "frequency_rank"])
        .expect("in-memory csv");
    for dist in distributions {
        for (&(id, label), &v) in &dist.values {
            w.write_record([
                dist.group.to_string(),
                vocabulary.token(id).unwrap_or_default().to_string(),
                labels.name(label).map_or_else(|| label.to_string(), str::to_string),
                v.to_string(),
                vocabulary.frequency_rank(id).to_string(),
            ])
            .expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{ExplanationDigest, WordScore};
    use crate::corpus::{build_vocab, Corpus, TokenizedExample};
    use proptest::prelude::*;

    fn record(important: &[&str], uncertain: &[&str], predicted: usize) -> DigestRecord {
        let words = |ws: &[&str], sign: f64| {
            ws.iter()
                .enumerate()
                .map(|(i, w)| WordScore {
                    position: i,
                    token: w.to_string(),
                    score: sign * (1.0 - i as f64 * 0.01),
                })
                .collect()
        };
        DigestRecord {
            example_id: format!("{important:?}{uncertain:?}{predicted}"),
            predicted_class: predicted,
            confidence: 0.8,
            gold_label: None,
            digest: ExplanationDigest {
                important: words(important, 1.0),
                uncertain: words(uncertain, -1.0),
            },
        }
    }

    fn vocab_of(words: &[&str]) -> Vocabulary {
        let labels = LabelSpace::new(vec!["neg".into(), "pos".into()]).unwrap();
        let c = Corpus::new(
            labels,
            vec![TokenizedExample {
                id: "v".into(),
                tokens: words.iter().map(|w| w.to_string()).collect(),
                gold_label: None,
            }],
        )
        .unwrap();
        build_vocab(&c, 1)
    }

    #[test]
    fn tally_counts() {
        let t = tally_features(&[], FeatureGroup::Important, LabelBasis::Predicted, 5, 2).unwrap();
        assert_eq!(t.total(), 0);

        let t = tally_features(
            &[record(&["great"], &[], 1)],
            FeatureGroup::Important,
            LabelBasis::Predicted,
            5,
            2,
        )
        .unwrap();
        assert_eq!(t.count("great", 1), 1);
        assert_eq!(t.total(), 1);

        let recs = [record(&[], &["bad"], 0), record(&[], &["bad"], 0), record(&[], &["bad"], 1)];
        let t = tally_features(&recs, FeatureGroup::Uncertain, LabelBasis::Predicted, 5, 2).unwrap();
        assert_eq!(t.count("bad", 0), 2);
        assert_eq!(t.count("bad", 1), 1);
        assert_eq!(t.feature_total("bad"), 3);
    }

    #[test]
    fn gold_basis_skips_unlabeled() {
        let mut r = record(&["a"], &[], 1);
        let t = tally_features(&[r.clone()], FeatureGroup::Important, LabelBasis::Gold, 5, 2).unwrap();
        assert_eq!(t.total(), 0);
        r.gold_label = Some(0);
        let t = tally_features(&[r], FeatureGroup::Important, LabelBasis::Gold, 5, 2).unwrap();
        assert_eq!(t.count("a", 0), 1);
    }

    #[test]
    fn top_n_limits_words_per_record() {
        let t = tally_features(
            &[record(&["a", "b", "c"], &[], 0)],
            FeatureGroup::Important,
            LabelBasis::Predicted,
            2,
            2,
        )
        .unwrap();
        assert_eq!(t.total(), 2);
        assert_eq!(t.count("c", 0), 0);
    }

    #[test]
    fn independent_feature_has_zero_lmi() {
        let mut t = FeatureTally::new(FeatureGroup::Important, LabelBasis::Predicted, 2);
        t.add("x", 0, 2).unwrap();
        t.add("x", 1, 2).unwrap();
        t.add("y", 0, 1).unwrap();
        t.add("y", 1, 1).unwrap();
        assert_eq!(t.raw_lmi("x", 0), 0.0);
    }

    #[test]
    fn hand_computed_lmi() {
        let mut t = FeatureTally::new(FeatureGroup::Uncertain, LabelBasis::Predicted, 2);
        t.add("bad", 0, 3).unwrap();
        t.add("bad", 1, 1).unwrap();
        t.add("other", 0, 3).unwrap();
        t.add("more", 1, 3).unwrap();
        assert_eq!((t.total(), t.label_total(0)), (10, 6));
        let expected = 0.3 * (0.75f64 / 0.6).ln();
        assert!((t.raw_lmi("bad", 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn exclusive_feature_closed_form() {
        let mut t = FeatureTally::new(FeatureGroup::Important, LabelBasis::Predicted, 2);
        t.add("only", 1, 2).unwrap();
        t.add("z", 0, 3).unwrap();
        let p_label = 2.0 / 5.0;
        assert!((t.raw_lmi("only", 1) - 0.4 * (1.0f64 / p_label).ln()).abs() < 1e-15);
        assert!(t.raw_lmi("only", 1) > 0.0);
    }

    #[test]
    fn empty_tally_errors_and_empty_distribution() {
        let t = FeatureTally::new(FeatureGroup::Important, LabelBasis::Predicted, 2);
        assert!(compute_lmi(&t, &vocab_of(&["a"])).is_err());
        let dist = LmiDistribution {
            group: FeatureGroup::Important,
            num_classes: 2,
            values: BTreeMap::new(),
            clamped_negative: 0,
            out_of_vocabulary: 0,
        };
        assert!(top_tokens(&dist, &vocab_of(&["a"]), 0, 10).is_empty());
    }

    #[test]
    fn single_nonzero_token() {
        let mut t = FeatureTally::new(FeatureGroup::Important, LabelBasis::Predicted, 2);
        t.add("solo", 1, 1).unwrap();
        t.add("both", 0, 1).unwrap();
        t.add("both", 1, 1).unwrap();
        let v = vocab_of(&["solo", "both", "both"]);
        let d = compute_lmi(&t, &v).unwrap();
        assert_eq!(top_tokens(&d, &v, 1, 10), vec!["solo"]);
        assert!((d.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let mut t = FeatureTally::new(FeatureGroup::Important, LabelBasis::Predicted, 2);
        t.add("good", 1, 2).unwrap();
        t.add("bad", 0, 2).unwrap();
        let v = vocab_of(&["good", "bad", "bad"]);
        let d = compute_lmi(&t, &v).unwrap();
        let labels = LabelSpace::new(vec!["neg".into(), "pos".into()]).unwrap();
        let csv = lmi_csv(&[&d], &v, &labels);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "group,token,label,p_lmi,frequency_rank");
        assert_eq!(lines[1], "important,bad,neg,0.5,1");
        assert_eq!(lines[2], "important,good,pos,0.5,2");
    }

    proptest! {
        #[test]
        fn normalized_and_scale_invariant(
            rows in proptest::collection::vec((0usize..6, 0usize..3, 1u64..6), 1..20),
            scale in 1u64..5,
        ) {
            let names: Vec<String> = (0..6).map(|i| format!("w{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let v = vocab_of(&refs);
            let mut t1 = FeatureTally::new(FeatureGroup::Important, LabelBasis::Predicted, 3);
            let mut t2 = t1.clone();
            for &(f, l, c) in &rows {
                t1.add(&names[f], l, c).unwrap();
                t2.add(&names[f], l, c * scale).unwrap();
            }
            let d1 = compute_lmi(&t1, &v).unwrap();
            let d2 = compute_lmi(&t2, &v).unwrap();
            if !d1.is_empty() {
                prop_assert!((d1.sum() - 1.0).abs() < 1e-9);
            }
            prop_assert!(d1.values.values().all(|v| *v >= 0.0));
            prop_assert_eq!(d1.values.len(), d2.values.len());
            for (k, a) in &d1.values {
                prop_assert!((a - d2.values[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn exclusive_dominates_split(
            count in 1u64..8, background in proptest::collection::vec(1u64..6, 2),
        ) {
            // Same count(e); compare every way of splitting it over two labels.
            let mut best_split = f64::NEG_INFINITY;
            for on_first in 0..count {
                let mut t = FeatureTally::new(FeatureGroup::Important, LabelBasis::Predicted, 2);
                t.add("bg", 0, background[0]).unwrap();
                t.add("bg", 1, background[1]).unwrap();
                t.add("e", 0, on_first).unwrap();
                t.add("e", 1, count - on_first).unwrap();
                best_split = best_split.max(t.raw_lmi("e", 1));
            }
            let mut t = FeatureTally::new(FeatureGroup::Important, LabelBasis::Predicted, 2);
            t.add("bg", 0, background[0]).unwrap();
            t.add("bg", 1, background[1]).unwrap();
            t.add("e", 1, count).unwrap();
            prop_assert!(t.raw_lmi("e", 1) >= best_split - 1e-15);
        }
    }
}

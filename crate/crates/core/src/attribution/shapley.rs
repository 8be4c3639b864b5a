use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::{Attribution, AttributionMeta, Method};
use crate::classifier::{Calibrated, Classifier};
use crate::corpus::TokenizedExample;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MAX_EXACT: usize = 12;
const EXACT_HARD_LIMIT: usize = 24;
/// Permutations whose coalitions are gathered into one model batch.
const PERMUTATIONS_PER_BATCH: usize = 32;

/// Coalition as a bitset over token positions.
#[derive(Clone, PartialEq, Eq, Hash)]
struct Coalition(Vec<u64>);

impl Coalition {
    fn empty(n: usize) -> Self {
        Coalition(vec![0; n.div_ceil(64).max(1)])
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    fn subsequence<'a>(&self, tokens: &[&'a str]) -> Vec<&'a str> {
        tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| self.contains(*i))
            .map(|(_, t)| *t)
            .collect()
    }
}

/// Memoized `f_y(coalition)` for one example.
struct CoalitionValues<'m, 't, M: Classifier> {
    model: &'m Calibrated<M>,
    tokens: &'t [&'t str],
    class: usize,
    values: HashMap<Coalition, f64>,
}

impl<M: Classifier> CoalitionValues<'_, '_, M> {
    fn ensure(&mut self, coalitions: &[Coalition]) -> Result<()> {
        let mut pending: Vec<Coalition> = Vec::new();
        let mut queued = std::collections::HashSet::new();
        for c in coalitions {
            if !self.values.contains_key(c) && queued.insert(c.clone()) {
                pending.push(c.clone());
            }
        }
        if pending.is_empty() {
            return Ok(());
        }
        let inputs: Vec<Vec<&str>> = pending.iter().map(|c| c.subsequence(self.tokens)).collect();
        let probs = self.model.class_probs(&inputs, self.class)?;
        self.values.extend(pending.into_iter().zip(probs));
        Ok(())
    }

    fn get(&self, c: &Coalition) -> f64 {
        self.values[c]
    }
}

/// Sampling Shapley with permutation prefixes.
///
/// Each of the `samples` draws is one uniform permutation of positions; the
/// coalition for position `i` is the set of positions before it. All
/// positions share the draw, so one permutation costs at most `N + 1`
/// evaluations, and repeated coalitions are served from a memo. The
/// permutation stream is keyed by `(seed, example id)`.
pub fn sampling_shapley_attribution<M: Classifier>(
    model: &Calibrated<M>,
    example: &TokenizedExample,
    samples: usize,
    seed: u64,
) -> Result<Attribution> {
    let tokens = example.token_refs();
    let n = tokens.len();
    if n == 0 {
        return Err(Error::invalid(format!(
            "example `{}` has no tokens to attribute",
            example.id
        )));
    }
    if samples == 0 {
        return Err(Error::invalid("sampling Shapley needs at least one sample"));
    }
    let full = model.predict(&tokens)?;
    let mut values = CoalitionValues {
        model,
        tokens: &tokens,
        class: full.predicted_class,
        values: HashMap::new(),
    };
    let mut all = Coalition::empty(n);
    (0..n).for_each(|i| all.insert(i));
    values.values.insert(all, full.confidence);

    let mut stream = rng::keyed_stream(seed, &example.id);
    let mut totals = vec![0.0; n];
    let mut remaining = samples;
    while remaining > 0 {
        let batch = remaining.min(PERMUTATIONS_PER_BATCH);
        remaining -= batch;
        let perms: Vec<Vec<usize>> = (0..batch)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut stream);
                p
            })
            .collect();

        let prefixes: Vec<Vec<Coalition>> = perms
            .iter()
            .map(|perm| {
                let mut c = Coalition::empty(n);
                let mut out = Vec::with_capacity(n + 1);
                out.push(c.clone());
                for &i in perm {
                    c.insert(i);
                    out.push(c.clone());
                }
                out
            })
            .collect();
        let flat: Vec<Coalition> = prefixes.iter().flatten().cloned().collect();
        values.ensure(&flat)?;

        for (perm, chain) in perms.iter().zip(&prefixes) {
            for (j, &i) in perm.iter().enumerate() {
                totals[i] += values.get(&chain[j + 1]) - values.get(&chain[j]);
            }
        }
    }

    let m = samples as f64;
    Ok(Attribution {
        example_id: example.id.clone(),
        method: Method::SamplingShapley,
        predicted_class: full.predicted_class,
        base_confidence: full.confidence,
        scores: totals.into_iter().map(|t| t / m).collect(),
        meta: AttributionMeta {
            samples: Some(samples),
            seed: Some(seed),
            sampler: Some("permutation".into()),
            temperature: model.temperature(),
            // The full input is evaluated once up front and seeded into the memo.
            queries: values.values.len(),
        },
    })
}

/// Exact Shapley values by enumerating all `2^N` coalitions. Refuses
/// inputs longer than `max_n`.
pub fn exact_shapley_attribution<M: Classifier>(
    model: &Calibrated<M>,
    example: &TokenizedExample,
    max_n: usize,
) -> Result<Attribution> {
    let tokens = example.token_refs();
    let n = tokens.len();
    if n == 0 {
        return Err(Error::invalid(format!(
            "example `{}` has no tokens to attribute",
            example.id
        )));
    }
    if n > max_n.min(EXACT_HARD_LIMIT) {
        return Err(Error::invalid(format!(
            "exact Shapley over {n} tokens exceeds the limit of {}",
            max_n.min(EXACT_HARD_LIMIT)
        )));
    }
    let full = model.predict(&tokens)?;
    let class = full.predicted_class;

    let subsets = 1usize << n;
    let mut value = Vec::with_capacity(subsets);
    for start in (0..subsets).step_by(4096) {
        let inputs: Vec<Vec<&str>> = (start..(start + 4096).min(subsets))
            .map(|mask| {
                (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| tokens[i])
                    .collect()
            })
            .collect();
        value.extend(model.class_probs(&inputs, class)?);
    }

    // weight(s) = s! (n - s - 1)! / n! = 1 / (n * C(n - 1, s))
    let weights: Vec<f64> = (0..n)
        .map(|s| {
            let mut binom = 1.0;
            for k in 0..s {
                binom = binom * (n - 1 - k) as f64 / (k + 1) as f64;
            }
            1.0 / (n as f64 * binom)
        })
        .collect();

    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..subsets {
            if mask & bit == 0 {
                let size = mask.count_ones() as usize;
                *p += weights[size] * (value[mask | bit] - value[mask]);
            }
        }
    }

    Ok(Attribution {
        example_id: example.id.clone(),
        method: Method::ExactShapley,
        predicted_class: class,
        base_confidence: full.confidence,
        scores: phi,
        meta: AttributionMeta {
            temperature: model.temperature(),
            queries: subsets + 1,
            ..Default::default()
        },
    })
}

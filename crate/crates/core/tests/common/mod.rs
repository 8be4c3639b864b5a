#![allow(dead_code)]

use uncq::classifier::{Calibrated, FnClassifier};
use uncq::corpus::TokenizedExample;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub type Stub = FnClassifier<fn(&[&str]) -> Vec<f64>>;

fn good_bad(tokens: &[&str]) -> Vec<f64> {
    let good = tokens.iter().filter(|t| **t == "good").count() as f64;
    let bad = tokens.iter().filter(|t| **t == "bad").count() as f64;
    vec![0.0, 0.5 * good - 0.5 * bad]
}

fn constant(_: &[&str]) -> Vec<f64> {
    vec![0.3, -0.4, 1.1]
}

/// Binary stub: class-1 logit `0.5 * #good - 0.5 * #bad`, class-0 logit 0.
pub fn good_bad_stub() -> Calibrated<Stub> {
    Calibrated::new(FnClassifier::new(2, good_bad as fn(&[&str]) -> Vec<f64>), 1.0).unwrap()
}

/// Ignores its input.
pub fn constant_stub() -> Calibrated<Stub> {
    Calibrated::new(FnClassifier::new(3, constant as fn(&[&str]) -> Vec<f64>), 1.0).unwrap()
}

pub fn example(id: &str, tokens: &[&str]) -> TokenizedExample {
    TokenizedExample {
        id: id.into(),
        tokens: tokens.iter().map(|t| t.to_string()).collect(),
        gold_label: None,
    }
}

/// Brute-force Shapley values straight from the subset-sum definition,
/// with factorial weights and a fresh closure evaluation per subset.
pub fn shapley_by_definition(n: usize, value: impl Fn(&[usize]) -> f64) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
    (0..n)
        .map(|i| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let mut phi = 0.0;
            for mask in 0..(1usize << others.len()) {
                let subset: Vec<usize> = others
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask & (1 << b) != 0)
                    .map(|(_, &j)| j)
                    .collect();
                let mut with_i = subset.clone();
                with_i.push(i);
                with_i.sort_unstable();
                let s = subset.len();
                let w = fact(s) * fact(n - s - 1) / fact(n);
                phi += w * (value(&with_i) - value(&subset));
            }
            phi
        })
        .collect()
}

//! The black-box classifier contract queried by every explainer.
//!
//! A [`Classifier`] maps a token subsequence (possibly empty) to one logit
//! per class. Probabilities are always produced here, by a temperature
//! softmax, so calibration is a property of the caller and not the model.

mod bow;
mod remote;

pub use bow::{train_bow, BagOfWordsModel};
pub use remote::{decode_response, encode_request, RemoteClassifier, RemoteEndpoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pre-softmax scores, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Model("logits must not be empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Model(format!("non-finite logit {v}")));
        }
        Ok(Logits(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Logits {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Logits::new(values)
    }
}

impl From<Logits> for Vec<f64> {
    fn from(l: Logits) -> Self {
        l.0
    }
}

/// `softmax(values / temperature)`, shifted by the max logit.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let scaled: Vec<f64> = logits.iter().map(|v| v / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if temperature.is_finite() && temperature > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "temperature must be positive and finite, got {temperature}"
        )))
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub logits: Logits,
    pub probs: Vec<f64>,
    pub predicted_class: usize,
    pub confidence: f64,
}

impl Prediction {
    pub fn from_logits(logits: Logits, temperature: f64) -> Result<Self> {
        let probs = softmax(logits.values(), temperature)?;
        let predicted_class = argmax(&probs);
        let confidence = probs[predicted_class];
        Ok(Prediction {
            logits,
            probs,
            predicted_class,
            confidence,
        })
    }
}

pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;

    /// Logits for each token subsequence, in input order.
    fn logits_batch(&self, inputs: &[Vec<&str>]) -> Result<Vec<Logits>>;

    fn logits(&self, tokens: &[&str]) -> Result<Logits> {
        let mut out = self.logits_batch(&[tokens.to_vec()])?;
        out.pop()
            .ok_or_else(|| Error::Model("classifier returned no logits".into()))
    }
}

impl<T: Classifier + ?Sized> Classifier for &T {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn logits_batch(&self, inputs: &[Vec<&str>]) -> Result<Vec<Logits>> {
        (**self).logits_batch(inputs)
    }
}

impl<T: Classifier + ?Sized> Classifier for Box<T> {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn logits_batch(&self, inputs: &[Vec<&str>]) -> Result<Vec<Logits>> {
        (**self).logits_batch(inputs)
    }
}

impl<T: Classifier + ?Sized> Classifier for std::sync::Arc<T> {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn logits_batch(&self, inputs: &[Vec<&str>]) -> Result<Vec<Logits>> {
        (**self).logits_batch(inputs)
    }
}

pub fn predict<M: Classifier + ?Sized>(
    model: &M,
    tokens: &[&str],
    temperature: f64,
) -> Result<Prediction> {
    check_temperature(temperature)?;
    Prediction::from_logits(model.logits(tokens)?, temperature)
}

pub fn predict_batch<M: Classifier + ?Sized>(
    model: &M,
    inputs: &[Vec<&str>],
    temperature: f64,
) -> Result<Vec<Prediction>> {
    check_temperature(temperature)?;
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let logits = model.logits_batch(inputs)?;
    if logits.len() != inputs.len() {
        return Err(Error::Model(format!(
            "expected {} logit rows, got {}",
            inputs.len(),
            logits.len()
        )));
    }
    logits
        .into_iter()
        .map(|l| Prediction::from_logits(l, temperature))
        .collect()
}

/// A classifier with a fixed softmax temperature. Logits pass through
/// untouched; only the probabilities change.
#[derive(Debug, Clone)]
pub struct Calibrated<M> {
    model: M,
    temperature: f64,
}

impl<M: Classifier> Calibrated<M> {
    pub fn new(model: M, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        Ok(Calibrated { model, temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn into_inner(self) -> M {
        self.model
    }

    pub fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    pub fn predict(&self, tokens: &[&str]) -> Result<Prediction> {
        predict(&self.model, tokens, self.temperature)
    }

    pub fn predict_batch(&self, inputs: &[Vec<&str>]) -> Result<Vec<Prediction>> {
        predict_batch(&self.model, inputs, self.temperature)
    }

    /// Probability of `class` for each input.
    pub fn class_probs(&self, inputs: &[Vec<&str>], class: usize) -> Result<Vec<f64>> {
        self.predict_batch(inputs)?
            .into_iter()
            .map(|p| {
                p.probs
                    .get(class)
                    .copied()
                    .ok_or_else(|| Error::Model(format!("class {class} out of range")))
            })
            .collect()
    }
}

/// Wraps a closure as a classifier. Handy for stubs and for models that
/// live elsewhere in the process.
pub struct FnClassifier<F> {
    num_classes: usize,
    f: F,
}

impl<F> FnClassifier<F>
where
    F: Fn(&[&str]) -> Vec<f64> + Send + Sync,
{
    pub fn new(num_classes: usize, f: F) -> Self {
        FnClassifier { num_classes, f }
    }
}

impl<F> Classifier for FnClassifier<F>
where
    F: Fn(&[&str]) -> Vec<f64> + Send + Sync,
{
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits_batch(&self, inputs: &[Vec<&str>]) -> Result<Vec<Logits>> {
        inputs
            .iter()
            .map(|tokens| {
                let values = (self.f)(tokens);
                if values.len() != self.num_classes {
                    return Err(Error::Model(format!(
                        "expected {} logits, got {}",
                        self.num_classes,
                        values.len()
                    )));
                }
                Logits::new(values)
            })
            .collect()
    }
}

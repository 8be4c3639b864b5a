//! Temperature scaling and Expected Calibration Error.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{softmax, Calibrated, Classifier, Prediction};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// One equal-width confidence bin. `avg_confidence` and `accuracy` are
/// `None` when the bin is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub avg_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "dev-nll")]
    DevNll,
    #[serde(rename = "dev-ece")]
    DevEce,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::DevNll => "dev-nll",
            Objective::DevEce => "dev-ece",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dev-nll" | "nll" => Ok(Objective::DevNll),
            "dev-ece" | "ece" => Ok(Objective::DevEce),
            other => Err(Error::invalid(format!("unknown objective `{other}`"))),
        }
    }
}

/// Linear temperature grid `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for TemperatureGrid {
    fn default() -> Self {
        TemperatureGrid {
            lo: 0.01,
            hi: 10.0,
            step: 0.01,
        }
    }
}

impl TemperatureGrid {
    pub fn validate(&self) -> Result<()> {
        let finite = self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite();
        if !finite || self.lo <= 0.0 || self.hi < self.lo || self.step <= 0.0 {
            return Err(Error::invalid(format!(
                "bad temperature grid lo={} hi={} step={}",
                self.lo, self.hi, self.step
            )));
        }
        Ok(())
    }

    /// Grid points, rounded to 1e-9 so decimal steps land on exact values
    /// such as 1.0.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|j| ((self.lo + j as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub temperature: f64,
    pub objective: Objective,
    pub pre_ece: f64,
    pub post_ece: f64,
    pub pre_objective: f64,
    pub post_objective: f64,
    pub num_bins: usize,
    pub grid: TemperatureGrid,
    /// Reliability bins at the fitted temperature.
    pub bins: Vec<ReliabilityBin>,
}

/// ECE measured on data the temperature was not fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutEce {
    pub count: usize,
    pub pre_ece: f64,
    pub post_ece: f64,
}

/// Contents of `calibration.json`: the dev-set fit plus optional test ECE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    #[serde(flatten)]
    pub dev: CalibrationResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<HeldOutEce>,
}

/// ECE over `(confidence, correct)` pairs with `num_bins` equal-width bins.
/// Bin `k` covers `(k/K, (k+1)/K]`; the first bin also takes 0.
pub fn ece_from_scores(scores: &[(f64, bool)], num_bins: usize) -> Result<(f64, Vec<ReliabilityBin>)> {
    if scores.is_empty() {
        return Err(Error::invalid("ECE needs at least one prediction"));
    }
    if num_bins == 0 {
        return Err(Error::invalid("ECE needs at least one bin"));
    }
    let k = num_bins as f64;
    let mut conf_sum = vec![0.0; num_bins];
    let mut correct = vec![0usize; num_bins];
    let mut count = vec![0usize; num_bins];
    for &(conf, ok) in scores {
        let b = bin_index(conf, num_bins);
        conf_sum[b] += conf;
        count[b] += 1;
        correct[b] += ok as usize;
    }
    let n = scores.len() as f64;
    let mut ece = 0.0;
    let bins = (0..num_bins)
        .map(|b| {
            let (avg_confidence, accuracy) = if count[b] == 0 {
                (None, None)
            } else {
                let c = count[b] as f64;
                let conf = conf_sum[b] / c;
                let acc = correct[b] as f64 / c;
                ece += (c / n) * (acc - conf).abs();
                (Some(conf), Some(acc))
            };
            ReliabilityBin {
                lower: b as f64 / k,
                upper: (b + 1) as f64 / k,
                count: count[b],
                avg_confidence,
                accuracy,
            }
        })
        .collect();
    Ok((ece, bins))
}

fn bin_index(conf: f64, num_bins: usize) -> usize {
    let k = num_bins as f64;
    let mut b = ((conf * k).ceil() as isize - 1).clamp(0, num_bins as isize - 1) as usize;
    // Guard against `conf * k` rounding across an edge.
    if b > 0 && conf <= b as f64 / k {
        b -= 1;
    } else if b + 1 < num_bins && conf > (b + 1) as f64 / k {
        b += 1;
    }
    b
}

pub fn compute_ece(
    predictions: &[(Prediction, usize)],
    num_bins: usize,
) -> Result<(f64, Vec<ReliabilityBin>)> {
    let scores: Vec<(f64, bool)> = predictions
        .iter()
        .map(|(p, gold)| (p.confidence, p.predicted_class == *gold))
        .collect();
    ece_from_scores(&scores, num_bins)
}

fn log_softmax_at(logits: &[f64], temperature: f64, class: usize) -> f64 {
    let scaled: Vec<f64> = logits.iter().map(|v| v / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    scaled[class] - lse
}

struct DevSet {
    logits: Vec<Vec<f64>>,
    gold: Vec<usize>,
}

impl DevSet {
    fn nll(&self, t: f64) -> f64 {
        let total: f64 = self
            .logits
            .iter()
            .zip(&self.gold)
            .map(|(l, &g)| -log_softmax_at(l, t, g))
            .sum();
        total / self.gold.len() as f64
    }

    fn ece(&self, t: f64, num_bins: usize) -> Result<(f64, Vec<ReliabilityBin>)> {
        let scores = self
            .logits
            .iter()
            .zip(&self.gold)
            .map(|(l, &g)| {
                let probs = softmax(l, t)?;
                let pred = crate::classifier::argmax(&probs);
                Ok((probs[pred], pred == g))
            })
            .collect::<Result<Vec<_>>>()?;
        ece_from_scores(&scores, num_bins)
    }

    fn objective(&self, objective: Objective, t: f64, num_bins: usize) -> Result<f64> {
        match objective {
            Objective::DevNll => Ok(self.nll(t)),
            Objective::DevEce => Ok(self.ece(t, num_bins)?.0),
        }
    }
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Grid search for the temperature minimizing `objective` on `dev`.
///
/// The model is queried once; every grid point only re-runs the softmax.
/// Ties go to the temperature nearest 1.0, then to the smaller one.
pub fn fit_temperature<M: Classifier + ?Sized>(
    model: &M,
    dev: &Corpus,
    grid: TemperatureGrid,
    objective: Objective,
    num_bins: usize,
) -> Result<CalibrationResult> {
    grid.validate()?;
    if dev.is_empty() {
        return Err(Error::invalid("development set is empty"));
    }
    let gold = dev
        .examples
        .iter()
        .map(|e| {
            e.gold_label
                .ok_or_else(|| Error::invalid(format!("dev example `{}` has no gold label", e.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<Vec<&str>> = dev.examples.iter().map(|e| e.token_refs()).collect();
    let logits = model
        .logits_batch(&inputs)?
        .into_iter()
        .map(Vec::from)
        .collect::<Vec<_>>();
    if let Some(bad) = gold.iter().zip(&logits).position(|(&g, l)| g >= l.len()) {
        return Err(Error::invalid(format!(
            "gold label of `{}` outside model classes",
            dev.examples[bad].id
        )));
    }
    let set = DevSet { logits, gold };

    let points = grid.points();
    let scores = points
        .par_iter()
        .map(|&t| set.objective(objective, t, num_bins))
        .collect::<Result<Vec<f64>>>()?;

    let mut best = 0;
    for i in 1..points.len() {
        let (cand, cur) = (scores[i], scores[best]);
        let better = if (cand - cur).abs() <= TIE_TOLERANCE {
            let (dc, db) = ((points[i] - 1.0).abs(), (points[best] - 1.0).abs());
            dc < db || (dc == db && points[i] < points[best])
        } else {
            cand < cur
        };
        if better {
            best = i;
        }
    }
    let temperature = points[best];
    let (pre_ece, _) = set.ece(1.0, num_bins)?;
    let (post_ece, bins) = set.ece(temperature, num_bins)?;
    Ok(CalibrationResult {
        temperature,
        objective,
        pre_ece,
        post_ece,
        pre_objective: set.objective(objective, 1.0, num_bins)?,
        post_objective: scores[best],
        num_bins,
        grid,
        bins,
    })
}

/// ECE of `model` at `temperature` over a labeled corpus.
pub fn evaluate_ece<M: Classifier>(
    model: &Calibrated<M>,
    corpus: &Corpus,
    num_bins: usize,
) -> Result<(f64, Vec<ReliabilityBin>)> {
    let inputs: Vec<Vec<&str>> = corpus.examples.iter().map(|e| e.token_refs()).collect();
    let preds = model.predict_batch(&inputs)?;
    let pairs = preds
        .into_iter()
        .zip(&corpus.examples)
        .map(|(p, e)| {
            e.gold_label
                .map(|g| (p, g))
                .ok_or_else(|| Error::invalid(format!("example `{}` has no gold label", e.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    compute_ece(&pairs, num_bins)
}

pub fn apply_temperature<M: Classifier>(model: M, temperature: f64) -> Result<Calibrated<M>> {
    Calibrated::new(model, temperature)
}

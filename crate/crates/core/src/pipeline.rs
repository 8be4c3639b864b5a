//! Config-driven stages: train, calibrate, explain, evaluate, LMI, report.
//!
//! Each stage is a pure function of the [`RunConfig`] and its inputs, so
//! two runs with the same configuration produce identical artifacts.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{
    default_k, make_digest, remove_positions, Attribution, DigestRecord, Explainer, Method,
    DEFAULT_MAX_EXACT,
};
use crate::calibration::{
    evaluate_ece, fit_temperature, CalibrationReport, HeldOutEce, Objective, TemperatureGrid,
};
use crate::classifier::{
    train_bow, BagOfWordsModel, Calibrated, Classifier, Logits, RemoteClassifier, RemoteEndpoint,
};
use crate::corpus::{
    build_vocab, load_corpus, split_corpus, Corpus, CorpusFormat, Split, SplitRatios,
    TokenizedExample, Vocabulary,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    confidence_change_experiment, default_bin_edges, important_removal_check, validate_edges,
    ConfidenceChangeReport,
};
use crate::lmi::{compute_lmi, lmi_csv, tally_features, FeatureGroup, LabelBasis, LmiDistribution};
use crate::report::{render_example_block, RenderSpec, RunOutputs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: Option<PathBuf>,
    pub format: CorpusFormat,
    pub lowercase: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            path: None,
            format: CorpusFormat::Jsonl,
            lowercase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let r = SplitRatios::default();
        SplitConfig {
            train: r.train,
            dev: r.dev,
            test: r.test,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            dev: self.dev,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassifierConfig {
    Builtin {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Remote {
        url: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
        #[serde(default = "default_max_batch")]
        max_batch: usize,
    },
}

fn default_alpha() -> f64 {
    1.0
}

fn default_timeout_secs() -> f64 {
    30.0
}

fn default_max_batch() -> usize {
    64
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::Builtin {
            alpha: default_alpha(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub objective: Objective,
    pub grid: TemperatureGrid,
    pub bins: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            objective: Objective::DevNll,
            grid: TemperatureGrid::default(),
            bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub method: Method,
    pub samples: usize,
    pub seed: u64,
    pub max_exact: usize,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            method: Method::SamplingShapley,
            samples: 200,
            seed: 0,
            max_exact: DEFAULT_MAX_EXACT,
        }
    }
}

impl ExplainerConfig {
    pub fn explainer(&self) -> Explainer {
        match self.method {
            Method::Loo => Explainer::Loo,
            Method::SamplingShapley => Explainer::SamplingShapley {
                samples: self.samples,
                seed: self.seed,
            },
            Method::ExactShapley => Explainer::ExactShapley {
                max_n: self.max_exact,
            },
        }
    }
}

/// Words kept per group. `None` picks 5, or 10 when training documents
/// average more than 100 tokens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DigestConfig {
    pub k_imp: Option<usize>,
    pub k_unc: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub sample_size: usize,
    /// Number of equal-width bins over `(1/C, 1]`, unless `bin_edges` is set.
    pub bins: usize,
    pub bin_edges: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            sample_size: 1000,
            bins: 5,
            bin_edges: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmiConfig {
    pub top_n: usize,
    pub basis: LabelBasis,
    /// Minimum training count for a token to enter the vocabulary.
    pub min_count: u64,
}

impl Default for LmiConfig {
    fn default() -> Self {
        LmiConfig {
            top_n: 5,
            basis: LabelBasis::Predicted,
            min_count: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub split: SplitConfig,
    pub classifier: ClassifierConfig,
    pub calibration: CalibrationConfig,
    pub explainer: ExplainerConfig,
    pub digest: DigestConfig,
    pub evaluation: EvaluationConfig,
    pub lmi: LmiConfig,
    pub out: PathBuf,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: CorpusConfig::default(),
            split: SplitConfig::default(),
            classifier: ClassifierConfig::default(),
            calibration: CalibrationConfig::default(),
            explainer: ExplainerConfig::default(),
            digest: DigestConfig::default(),
            evaluation: EvaluationConfig::default(),
            lmi: LmiConfig::default(),
            out: PathBuf::from("out"),
            workers: None,
        }
    }
}

fn at_least_one(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(Error::invalid(format!("{name} must be at least 1")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Rejects every out-of-range value.
    pub fn validate(&self) -> Result<()> {
        self.split.ratios().validate()?;
        match &self.classifier {
            ClassifierConfig::Builtin { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
                }
            }
            ClassifierConfig::Remote {
                url,
                timeout_secs,
                max_batch,
            } => {
                if !(url.starts_with("http://") || url.starts_with("https://")) {
                    return Err(Error::invalid(format!("remote url `{url}` is not http(s)")));
                }
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    return Err(Error::invalid("timeout_secs must be positive"));
                }
                at_least_one("max_batch", *max_batch)?;
            }
        }
        self.calibration.grid.validate()?;
        at_least_one("calibration.bins", self.calibration.bins)?;
        at_least_one("explainer.samples", self.explainer.samples)?;
        at_least_one("explainer.max_exact", self.explainer.max_exact)?;
        if let Some(k) = self.digest.k_imp {
            at_least_one("k_imp", k)?;
        }
        if let Some(k) = self.digest.k_unc {
            at_least_one("k_unc", k)?;
        }
        at_least_one("evaluation.sample_size", self.evaluation.sample_size)?;
        at_least_one("evaluation.bins", self.evaluation.bins)?;
        if let Some(edges) = &self.evaluation.bin_edges {
            validate_edges(edges)?;
            if edges[0] < 0.0 || edges[edges.len() - 1] > 1.0 {
                return Err(Error::invalid("bin edges must lie in [0, 1]"));
            }
        }
        at_least_one("lmi.top_n", self.lmi.top_n)?;
        if let Some(w) = self.workers {
            at_least_one("workers", w)?;
        }
        Ok(())
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        self.corpus
            .path
            .as_deref()
            .ok_or_else(|| Error::invalid("no corpus path configured"))
    }

    /// `k_imp` and `k_unc`, with defaults resolved from the training split.
    pub fn digest_sizes(&self, split: &Split) -> (usize, usize) {
        let k = default_k(split.train.average_length());
        (self.digest.k_imp.unwrap_or(k), self.digest.k_unc.unwrap_or(k))
    }

    pub fn bin_edges(&self, num_classes: usize) -> Vec<f64> {
        self.evaluation
            .bin_edges
            .clone()
            .unwrap_or_else(|| default_bin_edges(num_classes, self.evaluation.bins))
    }
}

/// Loads the configured corpus and splits it.
pub fn load_split(config: &RunConfig) -> Result<Split> {
    let corpus = load_corpus(config.corpus_path()?, config.corpus.format, config.corpus.lowercase)?;
    split_corpus(&corpus, config.split.ratios(), config.split.seed)
}

/// The classifier a run explains.
pub enum Model {
    Builtin(BagOfWordsModel),
    Remote(RemoteClassifier),
}

impl Classifier for Model {
    fn num_classes(&self) -> usize {
        match self {
            Model::Builtin(m) => m.num_classes(),
            Model::Remote(m) => m.num_classes(),
        }
    }

    fn logits_batch(&self, inputs: &[Vec<&str>]) -> Result<Vec<Logits>> {
        match self {
            Model::Builtin(m) => m.logits_batch(inputs),
            Model::Remote(m) => m.logits_batch(inputs),
        }
    }
}

/// Opens the configured classifier: the saved built-in model at
/// `model_path`, or the remote endpoint (`model_path` unused).
pub fn open_model(config: &RunConfig, model_path: &Path, split: &Split) -> Result<Model> {
    let labels = &split.train.label_space;
    match &config.classifier {
        ClassifierConfig::Builtin { .. } => {
            let text = std::fs::read_to_string(model_path).map_err(|e| Error::io(model_path, e))?;
            let model = BagOfWordsModel::from_json(&text)?;
            if model.label_space() != labels {
                return Err(Error::Model(format!(
                    "model labels {:?} do not match corpus labels {:?}",
                    model.label_space().names(),
                    labels.names()
                )));
            }
            Ok(Model::Builtin(model))
        }
        ClassifierConfig::Remote {
            url,
            timeout_secs,
            max_batch,
        } => {
            let endpoint =
                RemoteEndpoint::new(url.clone(), Duration::from_secs_f64(*timeout_secs), *max_batch)?;
            Ok(Model::Remote(RemoteClassifier::new(endpoint, labels.len())?))
        }
    }
}

pub struct Trained {
    pub model: BagOfWordsModel,
    pub dev_accuracy: Option<f64>,
}

/// Fits the built-in model on the training split.
pub fn train(config: &RunConfig, split: &Split) -> Result<Trained> {
    let ClassifierConfig::Builtin { alpha } = config.classifier else {
        return Err(Error::invalid("train unsupported for remote"));
    };
    let model = train_bow(&split.train, alpha)?;
    let dev_accuracy = accuracy(&Calibrated::new(&model, 1.0)?, &split.dev)?;
    Ok(Trained { model, dev_accuracy })
}

/// Fraction of labeled examples whose argmax matches the gold label.
pub fn accuracy<M: Classifier>(model: &Calibrated<M>, corpus: &Corpus) -> Result<Option<f64>> {
    let labeled: Vec<&TokenizedExample> =
        corpus.examples.iter().filter(|e| e.gold_label.is_some()).collect();
    if labeled.is_empty() {
        return Ok(None);
    }
    let inputs: Vec<Vec<&str>> = labeled.iter().map(|e| e.token_refs()).collect();
    let preds = model.predict_batch(&inputs)?;
    let correct = preds
        .iter()
        .zip(&labeled)
        .filter(|(p, e)| Some(p.predicted_class) == e.gold_label)
        .count();
    Ok(Some(correct as f64 / labeled.len() as f64))
}

/// Fits the temperature on dev; reports test ECE when the test split is
/// labeled.
pub fn calibrate<M: Classifier>(config: &RunConfig, model: &M, split: &Split) -> Result<CalibrationReport> {
    let cal = &config.calibration;
    let dev = fit_temperature(model, &split.dev, cal.grid, cal.objective, cal.bins)?;
    let labeled = !split.test.is_empty() && split.test.examples.iter().all(|e| e.gold_label.is_some());
    let test = if labeled {
        let (pre_ece, _) = evaluate_ece(&Calibrated::new(model, 1.0)?, &split.test, cal.bins)?;
        let (post_ece, _) = evaluate_ece(&Calibrated::new(model, dev.temperature)?, &split.test, cal.bins)?;
        Some(HeldOutEce {
            count: split.test.len(),
            pre_ece,
            post_ece,
        })
    } else {
        None
    };
    Ok(CalibrationReport { dev, test })
}

/// Attributions, digests and rendered blocks for a set of examples.
#[derive(Debug, Clone, Default)]
pub struct Explained {
    pub attributions: Vec<Attribution>,
    pub digests: Vec<DigestRecord>,
    pub rendered: Vec<String>,
}

/// Runs the configured explainer over `examples`, skipping empty ones.
/// Each rendered block shows the confidence after deleting the uncertain
/// words when there are any.
pub fn explain<M: Classifier>(
    config: &RunConfig,
    model: &Calibrated<M>,
    examples: &[&TokenizedExample],
    split: &Split,
) -> Result<Explained> {
    let explainer = config.explainer.explainer();
    let (k_imp, k_unc) = config.digest_sizes(split);
    let labels = &split.train.label_space;
    let spec = RenderSpec::default();
    let skipped = examples.iter().filter(|e| e.tokens.is_empty()).count();
    if skipped > 0 {
        log::warn!("skipping {skipped} empty example(s)");
    }
    let per_example = examples
        .par_iter()
        .filter(|e| !e.tokens.is_empty())
        .map(|ex| {
            let attr = explainer.explain(model, ex)?;
            let digest = make_digest(&attr, &ex.tokens, k_imp, k_unc)?;
            let toks = ex.token_refs();
            let pred = model.predict(&toks)?;
            let post = if digest.uncertain.is_empty() {
                None
            } else {
                let kept = remove_positions(&toks, &digest.uncertain_positions(k_unc))?;
                Some(model.predict(&kept)?.probs[pred.predicted_class])
            };
            let block = render_example_block(ex, labels, &pred, &digest, post, &spec)?;
            let record = DigestRecord {
                example_id: ex.id.clone(),
                predicted_class: pred.predicted_class,
                confidence: pred.confidence,
                gold_label: ex.gold_label,
                digest,
            };
            Ok((attr, record, block))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Explained::default();
    for (attr, record, block) in per_example {
        out.attributions.push(attr);
        out.digests.push(record);
        out.rendered.push(block);
    }
    Ok(out)
}

/// Uncertain-word removal and the important-word converse on the test
/// split. The sample size is capped at the number of usable examples.
pub fn evaluate<M: Classifier>(
    config: &RunConfig,
    model: &Calibrated<M>,
    split: &Split,
) -> Result<Vec<ConfidenceChangeReport>> {
    let explainer = config.explainer.explainer();
    let (k_imp, k_unc) = config.digest_sizes(split);
    let edges = config.bin_edges(split.test.num_classes());
    let usable = split.test.examples.iter().filter(|e| !e.tokens.is_empty()).count();
    let size = config.evaluation.sample_size.min(usable);
    if size < config.evaluation.sample_size {
        log::warn!(
            "sample size {} exceeds {usable} usable test examples; using {size}",
            config.evaluation.sample_size
        );
    }
    let seed = config.evaluation.seed;
    Ok(vec![
        confidence_change_experiment(model, &split.test, explainer, k_unc, &edges, seed, size)?,
        important_removal_check(model, &split.test, explainer, k_imp, &edges, seed, size)?,
    ])
}

/// Both LMI distributions and their CSV.
#[derive(Debug, Clone)]
pub struct LmiOutcome {
    pub important: LmiDistribution,
    pub uncertain: LmiDistribution,
    pub csv: String,
}

/// Vocabulary LMI statistics are reported over.
pub fn lmi_vocabulary(config: &RunConfig, split: &Split) -> Vocabulary {
    build_vocab(&split.train, config.lmi.min_count)
}

/// Tallies both groups. A group with no extracted words yields an empty
/// distribution and a warning rather than an error.
pub fn lmi(
    config: &RunConfig,
    digests: &[DigestRecord],
    vocabulary: &Vocabulary,
    split: &Split,
) -> Result<LmiOutcome> {
    let num_classes = split.train.num_classes();
    let dist = |group: FeatureGroup| -> Result<LmiDistribution> {
        let tally = tally_features(digests, group, config.lmi.basis, config.lmi.top_n, num_classes)?;
        if tally.total() == 0 {
            log::warn!("no {group} words extracted; its LMI distribution is empty");
            return Ok(LmiDistribution {
                group,
                num_classes,
                values: Default::default(),
                clamped_negative: 0,
                out_of_vocabulary: 0,
            });
        }
        let dist = compute_lmi(&tally, vocabulary)?;
        if dist.is_empty() {
            log::warn!("every {group} LMI value is at or below zero; its distribution is empty");
        }
        Ok(dist)
    };
    let important = dist(FeatureGroup::Important)?;
    let uncertain = dist(FeatureGroup::Uncertain)?;
    let csv = lmi_csv(&[&important, &uncertain], vocabulary, &split.train.label_space);
    Ok(LmiOutcome {
        important,
        uncertain,
        csv,
    })
}

/// Everything [`run_all`] produced. `model` is set for the built-in
/// classifier.
pub struct Run {
    pub model: Option<BagOfWordsModel>,
    pub outputs: RunOutputs,
}

/// The whole pipeline on one split: train (built-in only), calibrate,
/// explain the test split, evaluate, and compute LMI.
pub fn run_all(config: &RunConfig, split: &Split) -> Result<Run> {
    let (trained, model) = match &config.classifier {
        ClassifierConfig::Builtin { .. } => {
            let t = train(config, split)?;
            (Some(t.model.clone()), Model::Builtin(t.model))
        }
        ClassifierConfig::Remote { .. } => (None, open_model(config, Path::new(""), split)?),
    };
    let calibration = calibrate(config, &model, split)?;
    let calibrated = Calibrated::new(&model, calibration.dev.temperature)?;
    let examples: Vec<&TokenizedExample> = split.test.examples.iter().collect();
    let explained = explain(config, &calibrated, &examples, split)?;
    let reports = evaluate(config, &calibrated, split)?;
    let vocab = lmi_vocabulary(config, split);
    let lmi = lmi(config, &explained.digests, &vocab, split)?;
    Ok(Run {
        model: trained,
        outputs: RunOutputs {
            attributions: explained.attributions,
            digests: explained.digests,
            rendered: explained.rendered,
            reports,
            lmi_csv: Some(lmi.csv),
            calibration: Some(calibration),
            config: Some(config.to_value()),
        },
    })
}

use std::path::{Path, PathBuf};

use thiserror::Error;
use uncq::calibration::CalibrationReport;
use uncq::classifier::Calibrated;
use uncq::corpus::{load_corpus, Split, TokenizedExample};
use uncq::evaluation::RemovalGroup;
use uncq::pipeline::{self, ClassifierConfig, Model, RunConfig};
use uncq::report::{run_files, write_artifacts, RunOutputs};

use crate::{Command, Overrides};

#[derive(Debug, Error)]
pub enum Failure {
    /// Bad flags or configuration, caught before any compute.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] uncq::Error),
}

/// Config file (or defaults) with flag overrides applied, validated.
pub fn effective_config(ov: &Overrides) -> Result<RunConfig, Failure> {
    let mut config = match &ov.config {
        Some(path) => RunConfig::load(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(m) = ov.method {
        config.explainer.method = m;
    }
    if let Some(m) = ov.samples {
        config.explainer.samples = m;
    }
    if let Some(seed) = ov.seed {
        config.explainer.seed = seed;
        config.evaluation.seed = seed;
    }
    if let Some(k) = ov.k_imp {
        config.digest.k_imp = Some(k);
    }
    if let Some(k) = ov.k_unc {
        config.digest.k_unc = Some(k);
    }
    if let Some(out) = &ov.out {
        config.out = out.clone();
    }
    if let Some(w) = ov.workers {
        config.workers = Some(w);
    }
    config.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    config.corpus_path().map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(config)
}

pub fn run(command: Command, ov: &Overrides) -> Result<(), Failure> {
    let config = effective_config(ov)?;
    let ctx = Context {
        model_path: ov.model.clone().unwrap_or_else(|| config.out.join("model.json")),
        config,
    };
    let go = || match command {
        Command::Train => ctx.train(ov.model.is_some()),
        Command::Calibrate => ctx.calibrate(),
        Command::Explain { ids, input, calibration } => ctx.explain(&ids, input.as_deref(), calibration),
        Command::Evaluate { calibration } => ctx.evaluate(calibration),
        Command::Lmi { digests } => ctx.lmi(digests),
        Command::Report => ctx.report(),
    };
    match ctx.config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Validation(format!("cannot start {n} workers: {e}")))?
            .install(go),
        None => go(),
    }
}

struct Context {
    config: RunConfig,
    model_path: PathBuf,
}

impl Context {
    fn split(&self) -> Result<Split, Failure> {
        let split = pipeline::load_split(&self.config)?;
        log::info!(
            "split: {} train, {} dev, {} test",
            split.train.len(),
            split.dev.len(),
            split.test.len()
        );
        Ok(split)
    }

    fn write(&self, files: Vec<(String, Vec<u8>)>) -> Result<(), Failure> {
        let manifest = write_artifacts(&self.config.out, &files, Some(self.config.to_value()))?;
        for (name, _) in &files {
            println!("wrote {}", self.config.out.join(name).display());
        }
        log::debug!("manifest lists {} files", manifest.files.len());
        Ok(())
    }

    fn outputs(&self) -> RunOutputs {
        RunOutputs {
            config: Some(self.config.to_value()),
            ..Default::default()
        }
    }

    fn open(&self, split: &Split) -> Result<Model, Failure> {
        Ok(pipeline::open_model(&self.config, &self.model_path, split)?)
    }

    /// Temperature from `calibration.json`; T = 1 with a warning if absent.
    fn temperature(&self, path: Option<PathBuf>) -> Result<f64, Failure> {
        let explicit = path.is_some();
        let path = path.unwrap_or_else(|| self.config.out.join("calibration.json"));
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                let report: CalibrationReport =
                    serde_json::from_str(&text).map_err(|e| uncq::Error::Parse {
                        line: e.line() as u64,
                        message: format!("{}: {e}", path.display()),
                    })?;
                Ok(report.dev.temperature)
            }
            Err(e) if !explicit && e.kind() == std::io::ErrorKind::NotFound => {
                log::warn!("{} not found; using T = 1", path.display());
                Ok(1.0)
            }
            Err(e) => Err(uncq::Error::Io { path, source: e }.into()),
        }
    }

    fn train(&self, explicit_path: bool) -> Result<(), Failure> {
        if matches!(self.config.classifier, ClassifierConfig::Remote { .. }) {
            return Err(Failure::Validation("train unsupported for remote".into()));
        }
        let split = self.split()?;
        let trained = pipeline::train(&self.config, &split)?;
        let bytes = trained.model.to_json().into_bytes();
        if explicit_path {
            if let Some(dir) = self.model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| uncq::Error::Io { path: dir.into(), source: e })?;
            }
            uncq::report::write_file(&self.model_path, &bytes)?;
            println!("wrote {}", self.model_path.display());
        } else {
            self.write(vec![("model.json".into(), bytes)])?;
        }
        match trained.dev_accuracy {
            Some(acc) => println!("dev accuracy: {acc:.4}"),
            None => println!("dev accuracy: n/a (no labeled dev examples)"),
        }
        Ok(())
    }

    fn calibrate(&self) -> Result<(), Failure> {
        let split = self.split()?;
        let model = self.open(&split)?;
        let report = pipeline::calibrate(&self.config, &model, &split)?;
        println!(
            "temperature: {} (dev ECE {:.4} -> {:.4})",
            report.dev.temperature, report.dev.pre_ece, report.dev.post_ece
        );
        if let Some(test) = &report.test {
            println!("test ECE: {:.4} -> {:.4}", test.pre_ece, test.post_ece);
        }
        let outputs = RunOutputs {
            calibration: Some(report),
            ..self.outputs()
        };
        self.write(run_files(&outputs)?)
    }

    fn explain(&self, ids: &[String], input: Option<&Path>, calibration: Option<PathBuf>) -> Result<(), Failure> {
        let split = self.split()?;
        let model = self.open(&split)?;
        let calibrated = Calibrated::new(&model, self.temperature(calibration)?)?;
        let external;
        let examples: Vec<&TokenizedExample> = if let Some(path) = input {
            external = self.external_examples(path, &split)?;
            external.iter().collect()
        } else if ids.is_empty() {
            split.test.examples.iter().collect()
        } else {
            ids.iter()
                .map(|id| {
                    [&split.train, &split.dev, &split.test]
                        .iter()
                        .find_map(|c| c.get(id))
                        .ok_or_else(|| Failure::Validation(format!("no example with id `{id}`")))
                })
                .collect::<Result<_, _>>()?
        };
        let explained = pipeline::explain(&self.config, &calibrated, &examples, &split)?;
        println!("explained {} examples", explained.attributions.len());
        let outputs = RunOutputs {
            attributions: explained.attributions,
            digests: explained.digests,
            rendered: explained.rendered,
            ..self.outputs()
        };
        self.write(run_files(&outputs)?)
    }

    /// Examples from another corpus file, with gold labels mapped onto the
    /// training label names (unknown names become unlabeled).
    fn external_examples(&self, path: &Path, split: &Split) -> Result<Vec<TokenizedExample>, Failure> {
        let corpus = load_corpus(path, self.config.corpus.format, self.config.corpus.lowercase)?;
        let labels = &split.train.label_space;
        Ok(corpus
            .examples
            .iter()
            .map(|e| TokenizedExample {
                id: e.id.clone(),
                tokens: e.tokens.clone(),
                gold_label: e
                    .gold_label
                    .and_then(|g| corpus.label_space.name(g))
                    .and_then(|name| labels.index_of(name)),
            })
            .collect())
    }

    fn evaluate(&self, calibration: Option<PathBuf>) -> Result<(), Failure> {
        let split = self.split()?;
        let model = self.open(&split)?;
        let calibrated = Calibrated::new(&model, self.temperature(calibration)?)?;
        let reports = pipeline::evaluate(&self.config, &calibrated, &split)?;
        for r in &reports {
            let group = match r.group {
                RemovalGroup::Uncertain => "uncertain-word",
                RemovalGroup::Important => "important-word",
            };
            println!(
                "{group} removal ({}, k = {}): mean delta {:+.4} over {} examples, flip rate {:.3}",
                r.method, r.k, r.overall_mean_delta, r.sample_size, r.flip_rate
            );
        }
        let outputs = RunOutputs {
            reports,
            ..self.outputs()
        };
        self.write(run_files(&outputs)?)
    }

    fn lmi(&self, digests: Option<PathBuf>) -> Result<(), Failure> {
        let split = self.split()?;
        let path = digests.unwrap_or_else(|| self.config.out.join("digests.jsonl"));
        let text = std::fs::read_to_string(&path).map_err(|e| uncq::Error::Io { path: path.clone(), source: e })?;
        let records = uncq::attribution::parse_digest_records(&text)?;
        let num_classes = split.train.num_classes();
        if let Some(bad) = records.iter().find(|r| r.predicted_class >= num_classes) {
            return Err(uncq::Error::InvalidArgument(format!(
                "digest `{}` predicts class {} but the corpus has {num_classes} labels",
                bad.example_id, bad.predicted_class
            ))
            .into());
        }
        let vocab = pipeline::lmi_vocabulary(&self.config, &split);
        let out = pipeline::lmi(&self.config, &records, &vocab, &split)?;
        println!(
            "lmi: {} important and {} uncertain (token, label) entries",
            out.important.values.len(),
            out.uncertain.values.len()
        );
        self.write(vec![("lmi.csv".into(), out.csv.into_bytes())])
    }

    fn report(&self) -> Result<(), Failure> {
        let split = self.split()?;
        let run = pipeline::run_all(&self.config, &split)?;
        if let Some(cal) = &run.outputs.calibration {
            println!("temperature: {}", cal.dev.temperature);
        }
        let mut files = run_files(&run.outputs)?;
        if let Some(model) = &run.model {
            files.push(("model.json".into(), model.to_json().into_bytes()));
        }
        self.write(files)
    }
}

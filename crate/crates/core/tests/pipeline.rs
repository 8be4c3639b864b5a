use uncq::corpus::to_jsonl;
use uncq::pipeline::{self, ClassifierConfig, RunConfig};
use uncq::synthetic::{marker_corpus, mixed_polarity_corpus, MixedPolarity};

#[test]
fn defaults_round_trip_and_validate() {
    let config = RunConfig::default();
    config.validate().unwrap();
    let text = serde_json::to_string(&config).unwrap();
    assert_eq!(RunConfig::from_json(&text).unwrap(), config);
    assert_eq!(RunConfig::from_json("{}").unwrap(), config);
    assert_eq!(config.explainer.samples, 200);
    assert_eq!(config.calibration.bins, 10);
    assert_eq!(config.evaluation.sample_size, 1000);
    assert_eq!(config.lmi.top_n, 5);
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        r#"{"sample_size": 3}"#,
        r#"{"explainer": {"M": 3}}"#,
        r#"{"classifier": {"kind": "builtin", "alpha": 1, "beta": 2}}"#,
        r#"{"classifier": {"kind": "neural"}}"#,
    ] {
        assert!(RunConfig::from_json(text).is_err(), "{text}");
    }
    let remote = RunConfig::from_json(r#"{"classifier": {"kind": "remote", "url": "http://h:1"}}"#).unwrap();
    assert!(matches!(remote.classifier, ClassifierConfig::Remote { max_batch: 64, .. }));
}

#[test]
fn out_of_range_values_fail_validation() {
    let cases: Vec<fn(&mut RunConfig)> = vec![
        |c| c.split.dev = 0.7,
        |c| c.classifier = ClassifierConfig::Builtin { alpha: 0.0 },
        |c| {
            c.classifier = ClassifierConfig::Remote { url: "ftp://x".into(), timeout_secs: 1.0, max_batch: 1 }
        },
        |c| c.calibration.grid.step = 0.0,
        |c| c.calibration.bins = 0,
        |c| c.explainer.samples = 0,
        |c| c.digest.k_unc = Some(0),
        |c| c.evaluation.sample_size = 0,
        |c| c.evaluation.bin_edges = Some(vec![0.5, 0.5, 1.0]),
        |c| c.evaluation.bin_edges = Some(vec![0.5, 1.5]),
        |c| c.lmi.top_n = 0,
        |c| c.workers = Some(0),
    ];
    for (i, mutate) in cases.into_iter().enumerate() {
        let mut c = RunConfig::default();
        mutate(&mut c);
        assert!(c.validate().is_err(), "case {i} accepted");
    }
}

#[test]
fn remote_cannot_train() {
    let corpus = marker_corpus(50, 1);
    let split = uncq::corpus::split_corpus(&corpus, Default::default(), 0).unwrap();
    let mut config = RunConfig::default();
    config.classifier = ClassifierConfig::Remote {
        url: "http://127.0.0.1:9".into(),
        timeout_secs: 1.0,
        max_batch: 8,
    };
    let err = pipeline::train(&config, &split).err().unwrap();
    assert!(err.to_string().contains("train unsupported for remote"), "{err}");
}

#[test]
fn marker_corpus_is_learned() {
    let corpus = marker_corpus(2000, 4);
    let split = uncq::corpus::split_corpus(&corpus, Default::default(), 0).unwrap();
    let trained = pipeline::train(&RunConfig::default(), &split).unwrap();
    let acc = trained.dev_accuracy.unwrap();
    assert!(acc > 0.95, "dev accuracy {acc}");
}

#[test]
fn run_all_covers_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    std::fs::write(&path, to_jsonl(&mixed_polarity_corpus(&MixedPolarity { documents: 200, ..Default::default() })))
        .unwrap();
    let mut config = RunConfig::default();
    config.corpus.path = Some(path);
    config.explainer.samples = 10;
    let split = pipeline::load_split(&config).unwrap();
    let run = pipeline::run_all(&config, &split).unwrap();
    assert!(run.model.is_some());
    assert_eq!(run.outputs.attributions.len(), split.test.len());
    assert_eq!(run.outputs.reports.len(), 2);
    // Sample size 1000 is capped at the 20 test documents.
    assert_eq!(run.outputs.reports[0].sample_size, 20);
    let manifest = uncq::report::export_run(&run.outputs, &dir.path().join("out")).unwrap();
    let names: Vec<&str> = manifest.files.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(
        names,
        vec![
            "attributions.jsonl",
            "calibration.json",
            "confidence_change.csv",
            "confidence_change.json",
            "digests.jsonl",
            "important_removal.csv",
            "important_removal.json",
            "lmi.csv",
            "report.html",
        ]
    );
    assert_eq!(manifest.config.unwrap()["explainer"]["samples"], 10);
}

#[test]
fn later_commands_extend_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    uncq::report::write_artifacts(dir.path(), &[("a.txt".into(), b"one".to_vec())], None).unwrap();
    let m = uncq::report::write_artifacts(dir.path(), &[("b.txt".into(), b"two".to_vec())], None).unwrap();
    assert_eq!(m.files.len(), 2);
    let m = uncq::report::write_artifacts(dir.path(), &[("a.txt".into(), b"uno".to_vec())], None).unwrap();
    assert_eq!(m.files[0].sha256, uncq::report::sha256_hex(b"uno"));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uncq::attribution::parse_attributions;
use uncq::calibration::CalibrationReport;
use uncq::classifier::{BagOfWordsModel, Calibrated};
use uncq::corpus::{to_jsonl, Corpus, LabelSpace, TokenizedExample};
use uncq::report::sha256_hex;
use uncq::synthetic::{marker_corpus, mixed_polarity_corpus, MixedPolarity};

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(corpus: &Corpus, config: serde_json::Value) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("corpus.jsonl"), to_jsonl(corpus)).unwrap();
        let mut config = config;
        config["corpus"] = serde_json::json!({ "path": dir.path().join("corpus.jsonl") });
        std::fs::write(dir.path().join("config.json"), config.to_string()).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_uncq"))
            .arg("--config")
            .arg(self.path("config.json"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path(name)).unwrap()
    }
}

fn small_config() -> serde_json::Value {
    serde_json::json!({ "explainer": { "samples": 20 }, "evaluation": { "sample_size": 20 } })
}

#[test]
fn train_learns_marker_and_is_reproducible() {
    let ws = Workspace::new(&marker_corpus(2000, 4), small_config());
    let stdout = ws.ok(&["--out", "a", "train"]);
    let acc: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("dev accuracy: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc > 0.95, "dev accuracy {acc}");
    ws.ok(&["--out", "b", "train"]);
    assert_eq!(sha256_hex(&ws.read("a/model.json")), sha256_hex(&ws.read("b/model.json")));
    ws.ok(&["--model", "models/m.json", "train"]);
    assert_eq!(ws.read("a/model.json"), ws.read("models/m.json"));
}

/// Single-token documents: token `t{j}` is positive in exactly `j` of every
/// ten occurrences, so naive Bayes probabilities match label frequencies.
fn calibrated_corpus() -> Corpus {
    let labels = LabelSpace::new(vec!["neg".into(), "pos".into()]).unwrap();
    let mut examples = Vec::new();
    for rep in 0..1000 {
        for j in 1..10 {
            examples.push(TokenizedExample {
                id: format!("c{rep}-{j}"),
                tokens: vec![format!("t{j}")],
                gold_label: Some((rep % 10 < j) as usize),
            });
        }
    }
    Corpus::new(labels, examples).unwrap()
}

#[test]
fn calibrated_model_keeps_temperature_and_later_commands_reuse_it() {
    let mut config = small_config();
    config["split"] = serde_json::json!({ "train": 0.5, "dev": 0.4, "test": 0.1 });
    config["classifier"] = serde_json::json!({ "kind": "builtin", "alpha": 1e-6 });
    let ws = Workspace::new(&calibrated_corpus(), config);
    ws.ok(&["train"]);
    ws.ok(&["calibrate"]);
    let cal: CalibrationReport = serde_json::from_slice(&ws.read("out/calibration.json")).unwrap();
    let t = cal.dev.temperature;
    assert!((0.9..=1.1).contains(&t), "T = {t}");
    assert!(cal.test.is_some());

    ws.ok(&["--method", "loo", "explain"]);
    let attrs = parse_attributions(std::str::from_utf8(&ws.read("out/attributions.jsonl")).unwrap()).unwrap();
    assert!(!attrs.is_empty());
    assert!(attrs.iter().all(|a| a.meta.temperature == t));

    // One-token example under LOO: the score is f(x) - f(empty).
    let model = BagOfWordsModel::from_json(std::str::from_utf8(&ws.read("out/model.json")).unwrap()).unwrap();
    let model = Calibrated::new(model, t).unwrap();
    let a = &attrs[0];
    let empty = model.predict(&[]).unwrap().probs[a.predicted_class];
    assert_eq!(a.scores.len(), 1);
    assert!((a.scores[0] - (a.base_confidence - empty)).abs() <= 1e-12);

    ws.ok(&["evaluate"]);
    let report: serde_json::Value = serde_json::from_slice(&ws.read("out/confidence_change.json")).unwrap();
    assert_eq!(report["method"], "sampling-shapley");
}

#[test]
fn explain_is_deterministic_even_at_one_sample() {
    let corpus = mixed_polarity_corpus(&MixedPolarity { documents: 300, ..Default::default() });
    let ws = Workspace::new(&corpus, small_config());
    ws.ok(&["train"]);
    ws.ok(&["calibrate"]);
    let args = |out: &'static str| {
        ["--samples", "1", "--seed", "5", "--out", out, "--model", "out/model.json", "explain", "--calibration", "out/calibration.json"]
    };
    ws.ok(&args("x"));
    ws.ok(&["--workers", "1"].iter().chain(args("y").iter()).copied().collect::<Vec<_>>());
    assert_eq!(ws.read("x/attributions.jsonl"), ws.read("y/attributions.jsonl"));
    assert_eq!(ws.read("x/report.html"), ws.read("y/report.html"));
    let attrs = parse_attributions(std::str::from_utf8(&ws.read("x/attributions.jsonl")).unwrap()).unwrap();
    let test_ids: Vec<&str> = attrs.iter().map(|a| a.example_id.as_str()).collect();
    assert_eq!(attrs.len(), 30);
    for a in &attrs {
        assert_eq!(a.meta.samples, Some(1));
        assert!(a.scores.iter().all(|s| s.is_finite()));
    }

    let ids = format!("{},{}", test_ids[0], test_ids[1]);
    ws.ok(&["--out", "z", "--model", "out/model.json", "explain", "--ids", &ids]);
    let picked = parse_attributions(std::str::from_utf8(&ws.read("z/attributions.jsonl")).unwrap()).unwrap();
    assert_eq!(picked.len(), 2);
    let out = ws.run(&["--model", "out/model.json", "explain", "--ids", "missing"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn lmi_without_uncertain_words_warns_and_succeeds() {
    let ws = Workspace::new(&marker_corpus(200, 2), small_config());
    let digests = [
        r#"{"example_id":"a","predicted_class":1,"confidence":0.9,"gold_label":1,"important":[{"position":0,"token":"yes","score":0.4}],"uncertain":[]}"#,
        r#"{"example_id":"b","predicted_class":0,"confidence":0.8,"gold_label":0,"important":[{"position":2,"token":"the","score":0.1}],"uncertain":[]}"#,
    ];
    std::fs::write(ws.path("d.jsonl"), digests.join("\n")).unwrap();
    let out = ws.run(&["lmi", "--digests", "d.jsonl"]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no uncertain words"), "{stderr}");
    let csv = String::from_utf8(ws.read("out/lmi.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("important,")));
    assert!(csv.contains("important,yes,with,"));
}

#[test]
fn report_is_byte_identical_across_runs_and_worker_counts() {
    let corpus = mixed_polarity_corpus(&MixedPolarity { documents: 300, ..Default::default() });
    let ws = Workspace::new(&corpus, small_config());
    ws.ok(&["--out", "r1", "--workers", "1", "report"]);
    let first = ws.read("r1/manifest.json");
    std::fs::remove_dir_all(ws.path("r1")).unwrap();
    ws.ok(&["--out", "r1", "--workers", "1", "report"]);
    assert_eq!(first, ws.read("r1/manifest.json"));

    // Another worker count changes only the echoed config.
    ws.ok(&["--out", "r2", "--workers", "4", "report"]);
    let one: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let four: serde_json::Value = serde_json::from_slice(&ws.read("r2/manifest.json")).unwrap();
    assert_eq!(one["files"], four["files"]);
    assert_eq!(one["files"].as_array().unwrap().len(), 10);
    assert_eq!(one["config"]["workers"], 1);
    assert_eq!(four["config"]["workers"], 4);
}

fn code(out: &Output) -> Option<i32> {
    out.status.code()
}

#[test]
fn exit_codes_separate_validation_from_runtime() {
    let ws = Workspace::new(&marker_corpus(100, 1), small_config());
    assert_eq!(code(&ws.run(&["--samples", "0", "explain"])), Some(1));
    assert_eq!(code(&ws.run(&["--k-unc", "0", "evaluate"])), Some(1));
    assert_eq!(code(&ws.run(&["--method", "nope", "explain"])), Some(1));
    assert_eq!(code(&ws.run(&["--workers", "0", "train"])), Some(1));
    assert_eq!(code(&ws.run(&["frobnicate"])), Some(1));
    assert_eq!(code(&ws.run(&["--help"])), Some(0));

    std::fs::write(ws.path("bad.json"), r#"{"explainer": {"samples": 5, "extra": true}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_uncq"))
        .args(["--config", "bad.json", "train"])
        .current_dir(ws.dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), Some(1));
    // Validation fails before any output directory is touched.
    assert!(!Path::new(&ws.path("out")).exists());

    assert_eq!(code(&ws.run(&["--model", "absent.json", "calibrate"])), Some(2));

    std::fs::write(
        ws.path("remote.json"),
        serde_json::json!({
            "corpus": { "path": ws.path("corpus.jsonl") },
            "classifier": { "kind": "remote", "url": "http://127.0.0.1:9" }
        })
        .to_string(),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_uncq"))
        .args(["--config", "remote.json", "train"])
        .current_dir(ws.dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train unsupported for remote"));
}

mod common;

use common::*;
use uncq::attribution::{loo_attribution, Explainer};
use uncq::calibration::{fit_temperature, Objective, TemperatureGrid};
use uncq::classifier::{train_bow, Calibrated};
use uncq::corpus::{split_corpus, Corpus, LabelSpace, SplitRatios};
use uncq::evaluation::{
    confidence_change_experiment, default_bin_edges, important_removal_check, RemovalGroup,
};
use uncq::synthetic::{mixed_polarity_corpus, MixedPolarity};

fn stub_corpus() -> Corpus {
    let docs: [&[&str]; 6] = [
        &["good", "good", "bad"],
        &["bad", "bad", "good", "x"],
        &["good", "x", "bad", "good", "good"],
        &["bad"],
        &["x", "good"],
        &["good", "bad", "bad", "bad", "good"],
    ];
    let examples = docs
        .iter()
        .enumerate()
        .map(|(i, d)| example(&format!("s{i}"), d))
        .collect();
    Corpus::new(LabelSpace::new(vec!["neg".into(), "pos".into()]).unwrap(), examples).unwrap()
}

#[test]
fn constant_classifier_moves_nothing() {
    let model = constant_stub();
    let corpus = stub_corpus();
    let edges = default_bin_edges(3, 5);
    let r = confidence_change_experiment(&model, &corpus, Explainer::Loo, 3, &edges, 1, 6).unwrap();
    assert!(r.examples.iter().all(|e| e.delta == 0.0));
    assert!(r.bins.iter().all(|b| b.mean_delta.unwrap_or(0.0) == 0.0));
    assert_eq!(r.without_removable_words, 6);

    let r = important_removal_check(
        &model,
        &corpus,
        Explainer::SamplingShapley { samples: 10, seed: 2 },
        2,
        &edges,
        1,
        6,
    )
    .unwrap();
    assert_eq!(r.flip_rate, 0.0);
    assert_eq!(r.overall_mean_delta, 0.0);
}

#[test]
fn loo_removal_delta_equals_minus_extreme_score() {
    let model = good_bad_stub();
    let corpus = stub_corpus();
    let edges = default_bin_edges(2, 5);
    let unc = confidence_change_experiment(&model, &corpus, Explainer::Loo, 1, &edges, 3, 6).unwrap();
    let imp = important_removal_check(&model, &corpus, Explainer::Loo, 1, &edges, 3, 6).unwrap();
    for (u, i) in unc.examples.iter().zip(&imp.examples) {
        let ex = corpus.get(&u.example_id).unwrap();
        let attr = loo_attribution(&model, ex).unwrap();
        let s_min = attr.scores.iter().copied().fold(f64::INFINITY, f64::min);
        let s_max = attr.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let expect_unc = if s_min < 0.0 { -s_min } else { 0.0 };
        let expect_imp = if s_max > 0.0 { -s_max } else { 0.0 };
        assert!((u.delta - expect_unc).abs() <= 1e-12, "{}: {} vs {}", u.example_id, u.delta, expect_unc);
        assert!((i.delta - expect_imp).abs() <= 1e-12);
    }
}

#[test]
fn report_bookkeeping() {
    let model = good_bad_stub();
    let corpus = stub_corpus();
    let edges = default_bin_edges(2, 4);
    let r = confidence_change_experiment(&model, &corpus, Explainer::Loo, 2, &edges, 9, 5).unwrap();
    assert_eq!(r.sample_size, 5);
    assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 5);
    assert_eq!(r.group, RemovalGroup::Uncertain);
    for e in &r.examples {
        assert_eq!(e.delta, e.post - e.original);
    }
    let again = confidence_change_experiment(&model, &corpus, Explainer::Loo, 2, &edges, 9, 5).unwrap();
    assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());

    let csv = r.to_csv();
    assert!(csv.starts_with("lower,upper,count,mean_orig,mean_post,mean_delta\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn contract_errors() {
    let model = good_bad_stub();
    let corpus = stub_corpus();
    let edges = default_bin_edges(2, 5);
    assert!(confidence_change_experiment(&model, &corpus, Explainer::Loo, 1, &edges, 0, 7).is_err());
    let empty = Corpus::new(corpus.label_space.clone(), vec![]).unwrap();
    assert!(confidence_change_experiment(&model, &empty, Explainer::Loo, 1, &edges, 0, 0).is_err());
    assert!(confidence_change_experiment(&model, &corpus, Explainer::Loo, 1, &[0.9, 1.0], 0, 6).is_err());
}

#[test]
fn synthetic_corpus_shows_confidence_gain_and_loss() {
    let corpus = mixed_polarity_corpus(&MixedPolarity { documents: 600, ..Default::default() });
    let split = split_corpus(&corpus, SplitRatios::default(), 5).unwrap();
    let bow = train_bow(&split.train, 1.0).unwrap();
    let cal = fit_temperature(&bow, &split.dev, TemperatureGrid::default(), Objective::DevNll, 10).unwrap();
    let model = Calibrated::new(&bow, cal.temperature).unwrap();
    let edges = default_bin_edges(2, 5);
    for explainer in [Explainer::Loo, Explainer::SamplingShapley { samples: 50, seed: 4 }] {
        let unc = confidence_change_experiment(&model, &split.test, explainer, 5, &edges, 1, 60).unwrap();
        for b in unc.bins.iter().filter(|b| b.count > 0) {
            assert!(b.mean_delta.unwrap() > 0.0, "{explainer:?}: {b:?}");
        }
        let imp = important_removal_check(&model, &split.test, explainer, 5, &edges, 1, 60).unwrap();
        assert!(imp.overall_mean_delta < 0.0);
    }
}

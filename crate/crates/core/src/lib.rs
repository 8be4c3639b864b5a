//! Comprehensive explanations for probabilistic text classifiers.
//!
//! A prediction is explained twice: *important words* (positive
//! contributions to the predicted class) explain the label, and *uncertain
//! words* (negative contributions) explain why the calibrated confidence is
//! not higher. Attributions come from perturbation methods that only need
//! black-box access to the classifier:
//!
//! - [`attribution::loo_attribution`]: leave-one-out deletion.
//! - [`attribution::sampling_shapley_attribution`]: permutation-sampled
//!   Shapley values, checked against [`attribution::exact_shapley_attribution`].
//!
//! Supporting pieces cover the rest of the workflow: corpus ingestion
//! ([`corpus`]), a built-in multinomial Naive Bayes model and an HTTP adapter
//! ([`classifier`]), temperature scaling and ECE ([`calibration`]), the
//! uncertain-word removal experiment ([`evaluation`]), local mutual
//! information statistics ([`lmi`]) and HTML/JSON artifacts ([`report`]).

pub mod attribution;
pub mod calibration;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod lmi;
pub mod pipeline;
pub mod report;
pub mod synthetic;
mod rng;

pub use error::{Error, Result};

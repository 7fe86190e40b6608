//! Time-aware evaluation of binary malware classifiers.
//!
//! Classifier experiments on timestamped corpora go wrong in two recurring
//! ways: training data drawn from the future of the test data (temporal
//! bias), and class balances that flatter the metric rather than reflect
//! deployment (spatial bias). This crate provides the pieces needed to run
//! experiments that avoid both, and to measure what happens over time when
//! they are avoided:
//!
//! - [`corpus`]: loading, sanitizing, and projecting timestamped sample sets;
//! - [`temporal`]: time-aware train/test splits, slot construction, and the
//!   temporal consistency checks;
//! - [`spatial`]: class-ratio measurement, downsampling, and the test-ratio
//!   realism check;
//! - [`learners`]: small built-in classifiers (linear SVM, MLP) plus an
//!   external-predictions adapter, all deterministic given a seed;
//! - [`metrics`]: confusion-based metrics, per-slot decay curves, and the
//!   area-under-time summary of a curve;
//! - [`tuning`]: a grid search over the training class ratio that optimizes
//!   time-decay performance subject to an error budget;
//! - [`strategies`]: classifier maintenance strategies (no update,
//!   incremental retraining, active learning, conformal rejection) with
//!   explicit labeling and quarantine cost accounting;
//! - [`harness`]: experiment configuration, the end-to-end runner, the bias
//!   demonstration table, run comparison, and a synthetic drifting-corpus
//!   generator.

pub mod corpus;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod spatial;
pub mod strategies;
pub mod temporal;
pub mod tuning;

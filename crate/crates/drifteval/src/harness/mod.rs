//! Experiment orchestration: the fit/predict/update loop driven by a JSON
//! config, the four-setting bias demonstration, and cross-report comparison.
//!
//! [`fit_predict_update`] is the one-call evaluation: load a corpus, build a
//! time-aware split, verify the three validity constraints, optionally tune
//! the training malware ratio, run every configured strategy, and write
//! `report.json` plus per-run CSV artifacts. [`bias_demo`] reproduces the
//! classic comparison of time-oblivious versus time-aware designs on any
//! corpus, and [`compare_runs`] aligns finished reports into a
//! performance-versus-cost table.

pub mod config;
pub mod fixture;
pub mod report;

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Label, LoadOptions, Sample, load_corpus};
use crate::learners::{LearnerError, LearnerSpec, TrainedModel, fit, predict};
use crate::metrics::{
    CurveMode, MetricError, MetricKind, SlotLabels, aut, aut_values, aut_windows, confusion,
    decay_curve, metric,
};
use crate::spatial::{ClassBalance, SpatialError, check_c3, class_ratio};
use crate::strategies::{
    CorpusLabels, RejectionConfig, SlotSamples, StrategyError, StrategyRun, calibrate_thresholds,
    run_active_learning, run_incremental_retrain, run_no_update, run_rejection,
};
use crate::temporal::{SplitError, check_c1, check_c2, kfold_split, time_aware_split};
use crate::tuning::{TuningError, rebalance, tune_training_ratio};

pub use config::{
    BalanceConfig, CorpusConfig, ExperimentConfig, StrategyConfig, apply_env_overrides,
    load_config,
};
pub use fixture::{DriftKind, FixtureError, FixtureSpec, synthetic_corpus};
pub use report::{
    BiasCell, BiasSetting, BiasTable, ComparisonRow, ComparisonTable, ConstraintReport, RunFiles,
    RunOutcome, RunReport, Timings, TuningOutcome, WindowedAut, strategy_label,
};

/// Errors from experiment orchestration.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("corpus is unsuitable for the bias table: {0}")]
    TooShort(String),
    #[error("comparison needs at least 2 reports; got {0}")]
    NotEnoughReports(usize),
    #[error("reports disagree on corpus or split: {0}")]
    MismatchedReports(String),
    #[error("run produced {slots} slot values; comparison needs at least 2")]
    ShortRun { slots: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Tuning(#[from] TuningError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
}

impl HarnessError {
    /// True for errors a user fixes by editing the config or invocation, as
    /// opposed to failures of the experiment itself.
    #[must_use]
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_)
                | HarnessError::NotEnoughReports(_)
                | HarnessError::MismatchedReports(_)
        )
    }
}

/// Runs the complete experiment a config describes and writes its artifacts.
///
/// The steps, in order: load and sanitize the corpus; build the time-aware
/// split; (optionally) tune the training malware ratio on the training
/// window and apply φ* to it, or force a configured training ratio; force
/// the configured testing ratio on each slot; check C1 (temporal order), C2
/// (window consistency), and C3 (testing ratio realism); then run every
/// configured strategy and write `report.json`, per-run decay-curve CSVs,
/// and per-run slot CSVs into the output directory.
///
/// A constraint violation marks the report as biased. In strict mode the
/// run stops there: the report (still written, and returned) carries the
/// violation and no performance numbers. In warn mode the run proceeds with
/// a warning recorded.
pub fn fit_predict_update(config: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let started = Instant::now();
    config.validate()?;
    if config.runs.is_empty() {
        return Err(HarnessError::Config(
            "runs must not be empty; nothing to execute".to_owned(),
        ));
    }

    let options = LoadOptions {
        keep_grayware: config.corpus.keep_grayware,
        ..LoadOptions::default()
    };
    let (corpus, sanitization) = load_corpus(&config.corpus.path, config.corpus.format, &options)?;
    let split = time_aware_split(&corpus, &config.split)?;
    let mut warnings = split.warnings.clone();

    if let Some(tau) = config.aut_window {
        if split.slots.len() % tau != 0 {
            return Err(HarnessError::Config(format!(
                "aut_window {tau} does not divide the {} test slots",
                split.slots.len()
            )));
        }
    }

    let index = corpus.id_index();
    let resolve = |ids: &[String]| -> Vec<&Sample> {
        ids.iter()
            .map(|id| &corpus.samples()[index[id.as_str()]])
            .collect()
    };
    let mut train = resolve(&split.train);
    let mut slots: Vec<SlotSamples> = split
        .slots
        .iter()
        .map(|slot| SlotSamples {
            start: slot.start,
            samples: resolve(&slot.sample_ids),
        })
        .collect();
    let dimension = corpus.dimension();

    let mut balance = ClassBalance::new(config.balance.sigma_hat, config.balance.tolerance)?;

    // Training ratio: tuned φ* wins, else the forced ratio, else natural.
    let mut tuning_outcome = None;
    let mut tuning_ms = None;
    if let Some(tuning_config) = &config.tuning {
        let tuning_started = Instant::now();
        let result = tune_training_ratio(&train, &config.learner, &balance, tuning_config)?;
        train = apply_training_ratio(
            &train,
            result.phi_star,
            &config.learner,
            &balance,
            config.seed,
            dimension,
        )?;
        tuning_ms = Some(elapsed_ms(tuning_started));
        tuning_outcome = Some(result);
    } else if let Some(target) = config.balance.train_ratio {
        train = rebalance(&train, target, config.seed, None)?;
    }
    balance.phi = Some(class_ratio(train.iter().copied())?);

    // Testing ratio: forced per slot, or left natural.
    if let Some(target) = config.balance.test_ratio {
        for slot in &mut slots {
            slot.samples = rebalance(&slot.samples, target, config.seed, None)?;
        }
    }
    let pooled_test: Vec<&Sample> = slots
        .iter()
        .flat_map(|slot| slot.samples.iter().copied())
        .collect();
    let delta = class_ratio(pooled_test.iter().copied())?;
    balance.delta = Some(delta);

    let constraints = ConstraintReport {
        c1: check_c1(train.iter().copied(), pooled_test.iter().copied()),
        c2: check_c2(&split, &corpus),
        c3: check_c3(delta, balance.sigma_hat, balance.tolerance),
    };
    let violations = constraints.violations();
    let biased = (!violations.is_empty()).then(|| violations.join(", "));

    std::fs::create_dir_all(&config.out_dir)?;

    if let Some(biased) = &biased {
        if config.strict {
            // No performance numbers leave a biased strict run: write the
            // report with the violation and stop.
            let report = RunReport {
                config: config.clone(),
                sanitization,
                balance,
                constraints,
                biased: Some(biased.clone()),
                warnings,
                tuning: None,
                runs: Vec::new(),
                timings: Timings {
                    total_ms: elapsed_ms(started),
                    tuning_ms,
                    per_run_ms: Vec::new(),
                },
            };
            write_report_json(&report, &config.out_dir)?;
            return Ok(report);
        }
        warnings.push(format!("constraints violated ({biased}); proceeding in warn mode"));
    }

    let tuning_outcome = match tuning_outcome {
        Some(result) => {
            let trace_file = "tuning_trace.csv".to_owned();
            let mut writer = BufWriter::new(File::create(config.out_dir.join(&trace_file))?);
            result.write_trace_csv(&mut writer)?;
            Some(TuningOutcome { result, trace_file })
        }
        None => None,
    };

    let labels = CorpusLabels::from_samples(corpus.samples());
    let mut runs = Vec::with_capacity(config.runs.len());
    let mut per_run_ms = Vec::with_capacity(config.runs.len());
    for (run_index, strategy) in config.runs.iter().enumerate() {
        let run_started = Instant::now();
        let run = execute_strategy(strategy, &config.learner, &train, &slots, &labels, dimension)?;
        per_run_ms.push(elapsed_ms(run_started));
        runs.push(emit_run(&run, run_index, strategy.name(), config)?);
    }

    let report = RunReport {
        config: config.clone(),
        sanitization,
        balance,
        constraints,
        biased,
        warnings,
        tuning: tuning_outcome,
        runs,
        timings: Timings {
            total_ms: elapsed_ms(started),
            tuning_ms,
            per_run_ms,
        },
    };
    write_report_json(&report, &config.out_dir)?;
    Ok(report)
}

/// Runs only the training-ratio search of a config: load the corpus, build
/// the split, tune on the training window, and write `tuning_trace.csv` to
/// the output directory. Unlike [`fit_predict_update`], the run list may be
/// empty — no strategies execute. Errors unless the config has a `tuning`
/// section.
pub fn tune_only(config: &ExperimentConfig) -> Result<TuningOutcome, HarnessError> {
    let Some(tuning_config) = &config.tuning else {
        return Err(HarnessError::Config(
            "the config has no tuning section to run".to_owned(),
        ));
    };
    config.validate()?;

    let options = LoadOptions {
        keep_grayware: config.corpus.keep_grayware,
        ..LoadOptions::default()
    };
    let (corpus, _) = load_corpus(&config.corpus.path, config.corpus.format, &options)?;
    let split = time_aware_split(&corpus, &config.split)?;
    let index = corpus.id_index();
    let train: Vec<&Sample> = split
        .train
        .iter()
        .map(|id| &corpus.samples()[index[id.as_str()]])
        .collect();
    let balance = ClassBalance::new(config.balance.sigma_hat, config.balance.tolerance)?;
    let result = tune_training_ratio(&train, &config.learner, &balance, tuning_config)?;

    std::fs::create_dir_all(&config.out_dir)?;
    let trace_file = "tuning_trace.csv".to_owned();
    let mut writer = BufWriter::new(File::create(config.out_dir.join(&trace_file))?);
    result.write_trace_csv(&mut writer)?;
    Ok(TuningOutcome { result, trace_file })
}

fn elapsed_ms(since: Instant) -> u64 {
    u64::try_from(since.elapsed().as_millis()).unwrap_or(u64::MAX)
}

fn write_report_json(report: &RunReport, out_dir: &Path) -> Result<(), HarnessError> {
    let mut writer = BufWriter::new(File::create(out_dir.join("report.json"))?);
    report.write_json(&mut writer)
}

/// Resolves one configured strategy (calibrating rejection thresholds when
/// they were left unset) and runs it.
fn execute_strategy(
    strategy: &StrategyConfig,
    spec: &LearnerSpec,
    train: &[&Sample],
    slots: &[SlotSamples],
    labels: &CorpusLabels,
    dimension: usize,
) -> Result<StrategyRun, HarnessError> {
    match *strategy {
        StrategyConfig::NoUpdate => {
            let model = fit(spec, train, dimension)?;
            Ok(run_no_update(&model, slots, labels)?)
        }
        StrategyConfig::IncrementalRetrain => {
            Ok(run_incremental_retrain(spec, train, slots, labels, dimension)?)
        }
        StrategyConfig::ActiveLearning { budget } => {
            Ok(run_active_learning(spec, train, slots, labels, dimension, budget)?)
        }
        StrategyConfig::Rejection {
            goodware_threshold,
            malware_threshold,
            calibration_fraction,
            max_rejection_rate,
        } => {
            let rejection = match (goodware_threshold, malware_threshold) {
                (Some(goodware_threshold), Some(malware_threshold)) => RejectionConfig {
                    calibration_fraction,
                    goodware_threshold,
                    malware_threshold,
                },
                _ => calibrate_thresholds(
                    spec,
                    train,
                    dimension,
                    calibration_fraction,
                    max_rejection_rate,
                )?,
            };
            Ok(run_rejection(spec, train, slots, labels, &rejection, dimension)?)
        }
    }
}

/// Writes one run's CSV artifacts and condenses it into a [`RunOutcome`].
fn emit_run(
    run: &StrategyRun,
    run_index: usize,
    name: &str,
    config: &ExperimentConfig,
) -> Result<RunOutcome, HarnessError> {
    let files = RunFiles {
        point_curve: format!("curve_{run_index:02}_{name}_point.csv"),
        cumulative_curve: format!("curve_{run_index:02}_{name}_cumulative.csv"),
        slots: format!("strategy_{run_index:02}_{name}.csv"),
    };
    let mut writer = BufWriter::new(File::create(config.out_dir.join(&files.point_curve))?);
    run.point_curve.write_csv(&mut writer)?;
    let mut writer = BufWriter::new(File::create(config.out_dir.join(&files.cumulative_curve))?);
    run.cumulative_curve.write_csv(&mut writer)?;
    let mut writer = BufWriter::new(File::create(config.out_dir.join(&files.slots))?);
    run.write_slot_csv(&mut writer)?;

    let windowed_aut = match config.aut_window {
        Some(tau) => Some(
            aut_windows(&run.point_curve, tau)?
                .into_iter()
                .map(|(end_slot, value)| WindowedAut { end_slot, value })
                .collect(),
        ),
        None => None,
    };

    Ok(RunOutcome {
        strategy: run.strategy.clone(),
        files,
        slot_starts: run.point_curve.slot_starts.clone(),
        point_values: run.point_curve.values.clone(),
        cumulative_values: run.cumulative_curve.values.clone(),
        aut_point: run.aut_point,
        aut_cumulative: run.aut_cumulative,
        windowed_aut,
        labeling_cost: run.ledger.labeling_cost,
        quarantine_cost: run.ledger.quarantine_cost,
    })
}

/// Rebalances the full training window to the tuned ratio the same way the
/// tuner rebalanced its proper block: raising the malware fraction sheds the
/// goodware a σ̂-trained baseline is most certain about; lowering it sheds
/// malware uniformly at random.
fn apply_training_ratio<'a>(
    train: &[&'a Sample],
    phi_star: f64,
    spec: &LearnerSpec,
    balance: &ClassBalance,
    seed: u64,
    dimension: usize,
) -> Result<Vec<&'a Sample>, HarnessError> {
    let natural = class_ratio(train.iter().copied())?;
    if (phi_star - natural).abs() < 1e-12 {
        return Ok(train.to_vec());
    }
    if phi_star < natural {
        return Ok(rebalance(train, phi_star, seed, None)?);
    }
    let baseline_train = rebalance(train, balance.sigma_hat, seed, None)?;
    let baseline = fit(spec, &baseline_train, dimension)?;
    let goodware: Vec<&Sample> = train
        .iter()
        .copied()
        .filter(|s| s.label == Label::Goodware)
        .collect();
    let mut priority = HashMap::with_capacity(goodware.len());
    for (sample, prediction) in goodware.iter().zip(predict(&baseline, &goodware)?) {
        priority.insert(sample.id.clone(), -prediction.score.abs());
    }
    Ok(rebalance(train, phi_star, seed, Some(&priority))?)
}

/// Contrasts four experimental designs on one corpus, each evaluated at two
/// forced testing malware ratios (σ̂ and an unrealistic 0.9): stratified
/// 10-fold cross-validation, training on a middle segment with past and
/// future pooled as the test set, training classes drawn from disjoint time
/// windows, and the honest design (train on the earliest segment, test
/// forward slot by slot, summarized as area under the F1 curve).
///
/// The corpus span is cut into five equal-duration segments S1..S5 (leftover
/// days go to the earliest segments): the middle-segment design trains on S3
/// and tests on S1, S2, S4, S5 pooled; the disjoint-window design trains on
/// S2's goodware plus S1's malware and tests on S5's goodware plus S3's
/// malware; the honest design trains on S1 and tests on S2..S5 as slots.
/// Every segment must contain both classes, and 10-fold needs at least ten
/// samples of the rarer class.
pub fn bias_demo(
    corpus: &Corpus,
    spec: &LearnerSpec,
    sigma_hat: f64,
    seed: u64,
) -> Result<BiasTable, HarnessError> {
    if !sigma_hat.is_finite() || sigma_hat <= 0.0 || sigma_hat >= 1.0 {
        return Err(HarnessError::Config(format!(
            "sigma_hat must lie strictly inside (0, 1); got {sigma_hat}"
        )));
    }
    let segments = five_segments(corpus)?;
    let dimension = corpus.dimension();
    let ratios = [sigma_hat, 0.9];
    let mut cells = Vec::with_capacity(8);

    // Stratified 10-fold cross-validation, mean F1 across folds.
    let folds = kfold_split(corpus, 10, seed)?;
    let index = corpus.id_index();
    let resolve = |ids: &[String]| -> Vec<&Sample> {
        ids.iter()
            .map(|id| &corpus.samples()[index[id.as_str()]])
            .collect()
    };
    let mut fold_sums = [0.0; 2];
    for (train_ids, test_ids) in &folds {
        let model = fit(spec, &resolve(train_ids), dimension)?;
        let test = resolve(test_ids);
        for (column, &ratio) in ratios.iter().enumerate() {
            let test = rebalance(&test, ratio, seed, None)?;
            fold_sums[column] += pooled_f1(&model, &test)?;
        }
    }
    for (column, &ratio) in ratios.iter().enumerate() {
        cells.push(BiasCell {
            setting: BiasSetting::TenfoldCv,
            test_ratio: ratio,
            f1: fold_sums[column] / folds.len() as f64,
        });
    }

    // Train on the middle segment; past and future pooled as the test set.
    let middle_model = fit(spec, &segments[2].samples, dimension)?;
    let pooled: Vec<&Sample> = [0usize, 1, 3, 4]
        .iter()
        .flat_map(|&k| segments[k].samples.iter().copied())
        .collect();
    for &ratio in &ratios {
        let test = rebalance(&pooled, ratio, seed, None)?;
        cells.push(BiasCell {
            setting: BiasSetting::TemporallyInconsistent,
            test_ratio: ratio,
            f1: pooled_f1(&middle_model, &test)?,
        });
    }

    // Training classes from disjoint windows: S2 goodware + S1 malware;
    // tested on S5 goodware + S3 malware.
    let class_slice = |segment: usize, label: Label| -> Vec<&Sample> {
        segments[segment]
            .samples
            .iter()
            .copied()
            .filter(|s| s.label == label)
            .collect()
    };
    let mut disjoint_train = class_slice(0, Label::Malware);
    disjoint_train.extend(class_slice(1, Label::Goodware));
    let mut disjoint_test = class_slice(2, Label::Malware);
    disjoint_test.extend(class_slice(4, Label::Goodware));
    let disjoint_model = fit(spec, &disjoint_train, dimension)?;
    for &ratio in &ratios {
        let test = rebalance(&disjoint_test, ratio, seed, None)?;
        cells.push(BiasCell {
            setting: BiasSetting::InconsistentClassWindows,
            test_ratio: ratio,
            f1: pooled_f1(&disjoint_model, &test)?,
        });
    }

    // The honest design: train on S1, test S2..S5 forward as slots.
    let honest_model = fit(spec, &segments[0].samples, dimension)?;
    for &ratio in &ratios {
        let mut slot_labels = Vec::with_capacity(4);
        for segment in &segments[1..] {
            let slot = rebalance(&segment.samples, ratio, seed, None)?;
            let predictions = predict(&honest_model, &slot)?;
            slot_labels.push(SlotLabels {
                start: segment.start,
                y_true: slot.iter().map(|s| s.label).collect(),
                y_pred: predictions.iter().map(|p| p.label).collect(),
            });
        }
        let curve = decay_curve(&slot_labels, MetricKind::F1, CurveMode::Point)?;
        cells.push(BiasCell {
            setting: BiasSetting::TemporallyConsistent,
            test_ratio: ratio,
            f1: aut(&curve, 4)?,
        });
    }

    Ok(BiasTable { sigma_hat, cells })
}

struct Segment<'a> {
    start: chrono::NaiveDate,
    samples: Vec<&'a Sample>,
}

/// Cuts the corpus span into five equal-duration segments (remainder days
/// to the earliest) and groups the samples. Errors unless every segment
/// holds both classes.
fn five_segments(corpus: &Corpus) -> Result<Vec<Segment<'_>>, HarnessError> {
    let samples = corpus.samples();
    let Some(first) = samples.first() else {
        return Err(HarnessError::TooShort("the corpus is empty".to_owned()));
    };
    let start = first.timestamp;
    let end = samples.last().expect("non-empty").timestamp;
    let total_days = (end - start).num_days() + 1;
    if total_days < 5 {
        return Err(HarnessError::TooShort(format!(
            "span of {total_days} days cannot be cut into five segments"
        )));
    }

    let base = total_days / 5;
    let remainder = total_days % 5;
    let mut segments = Vec::with_capacity(5);
    let mut cursor = start;
    for index in 0..5 {
        let length = base + i64::from((index as i64) < remainder);
        let segment_end = cursor + chrono::Duration::days(length);
        let members: Vec<&Sample> = samples
            .iter()
            .filter(|s| s.timestamp >= cursor && s.timestamp < segment_end)
            .collect();
        let malware = members.iter().filter(|s| s.label.is_malware()).count();
        if malware == 0 || malware == members.len() {
            return Err(HarnessError::TooShort(format!(
                "segment {} [{cursor}, {segment_end}) lacks one of the classes",
                index + 1
            )));
        }
        segments.push(Segment {
            start: cursor,
            samples: members,
        });
        cursor = segment_end;
    }
    Ok(segments)
}

/// F1 of one model over one pooled sample list.
fn pooled_f1(model: &TrainedModel, test: &[&Sample]) -> Result<f64, HarnessError> {
    let predictions = predict(model, test)?;
    let y_true: Vec<Label> = test.iter().map(|s| s.label).collect();
    let y_pred: Vec<Label> = predictions.iter().map(|p| p.label).collect();
    let counts = confusion(&y_true, &y_pred)?;
    Ok(metric(MetricKind::F1, &counts).value)
}

/// Aligns several reports' runs into one performance-versus-cost table:
/// area under the full point F1 curve, area under its first half, labeling
/// cost, and quarantine cost per strategy. All reports must describe the
/// same corpus and split.
pub fn compare_runs(reports: &[RunReport]) -> Result<ComparisonTable, HarnessError> {
    if reports.len() < 2 {
        return Err(HarnessError::NotEnoughReports(reports.len()));
    }
    let reference = &reports[0];
    for (index, report) in reports.iter().enumerate().skip(1) {
        if report.config.corpus.path != reference.config.corpus.path {
            return Err(HarnessError::MismatchedReports(format!(
                "report {index} evaluates {}, report 0 evaluates {}",
                report.config.corpus.path.display(),
                reference.config.corpus.path.display()
            )));
        }
        if report.config.split != reference.config.split {
            return Err(HarnessError::MismatchedReports(format!(
                "report {index} uses a different split than report 0"
            )));
        }
    }

    let mut rows = Vec::new();
    for report in reports {
        for outcome in &report.runs {
            let n = outcome.point_values.len();
            let aut_full = outcome
                .aut_point
                .ok_or(HarnessError::ShortRun { slots: n })?;
            let half = n.div_ceil(2).max(2);
            let aut_half = aut_values(&outcome.point_values[..half])?;
            rows.push(ComparisonRow {
                strategy: strategy_label(&outcome.strategy),
                aut_full,
                aut_half,
                labeling_cost: outcome.labeling_cost,
                quarantine_cost: outcome.quarantine_cost,
            });
        }
    }
    Ok(ComparisonTable { rows })
}

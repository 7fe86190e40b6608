//! Grid search over the training malware ratio φ.
//!
//! Classifiers trained at the natural (often heavily goodware-skewed) class
//! balance can trade too much recall for precision, or vice versa. This
//! module searches a grid of training ratios for the φ* that maximizes a
//! chosen metric on a held-out validation block, subject to a cap on the
//! accompanying error rate.
//!
//! The search never peeks forward in time: the validation block is the
//! temporally last part of the training window, is rebalanced to the
//! estimated in-the-wild malware fraction σ̂, and is scored slot by slot so
//! the objective is an area-under-time rather than a single pooled number.

use std::collections::HashMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, Sample};
use crate::learners::{fit, predict, LearnerError, LearnerSpec, TrainedModel};
use crate::metrics::{
    aut, confusion, decay_curve_from_counts, error_rate, ConfusionCounts, CurveMode, DecayCurve,
    MetricError, MetricKind,
};
use crate::spatial::{class_ratio, check_c3, downsample_to_ratio, ClassBalance, SpatialError};
use crate::temporal::{check_c1, split_by_recency};

fn default_val_fraction() -> f64 {
    1.0 / 3.0
}

fn default_val_slots() -> usize {
    4
}

/// Settings for [`tune_training_ratio`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    /// Grid step: candidate ratios are μ, 2μ, 3μ, … < 1.0.
    pub mu: f64,
    /// Metric maximized on the validation block.
    pub target: MetricKind,
    /// Maximum tolerated error rate; candidates above it are rejected
    /// regardless of their metric value.
    pub e_max: f64,
    /// Fraction of the training window (by time) reserved for validation.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Number of consecutive time slots the validation block is divided
    /// into when computing the area-under-time objective.
    #[serde(default = "default_val_slots")]
    pub val_slots: usize,
    /// Seed for every downsampling decision made during the search.
    #[serde(default)]
    pub seed: u64,
}

impl TuningConfig {
    /// Checks the grid step, error cap, and validation-split parameters.
    pub fn validate(&self) -> Result<(), TuningError> {
        if !self.mu.is_finite() || self.mu <= 0.0 || self.mu >= 1.0 {
            return Err(TuningError::BadStepSize(self.mu));
        }
        if !self.e_max.is_finite() || !(0.0..=1.0).contains(&self.e_max) {
            return Err(TuningError::BadErrorCap(self.e_max));
        }
        if !self.val_fraction.is_finite() || self.val_fraction <= 0.0 || self.val_fraction >= 1.0 {
            return Err(TuningError::BadValidationFraction(self.val_fraction));
        }
        if self.val_slots < 2 {
            return Err(TuningError::BadValidationSlots(self.val_slots));
        }
        Ok(())
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Training malware ratio of this candidate.
    pub phi: f64,
    /// Area-under-time of the target metric on the validation slots.
    pub aut: f64,
    /// Error rate over the pooled validation block.
    pub error: f64,
    /// Whether this candidate improved on the running best while staying
    /// under the error cap.
    pub accepted: bool,
}

/// Outcome of [`tune_training_ratio`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    /// Best training ratio found; equals `sigma_hat` when no grid point
    /// beat the baseline.
    pub phi_star: f64,
    /// Validation area-under-time achieved at `phi_star`.
    pub p_star: f64,
    /// The baseline ratio the search started from.
    pub sigma_hat: f64,
    /// Validation area-under-time of the baseline model (trained at
    /// `sigma_hat`).
    pub baseline_aut: f64,
    /// Every evaluated grid point, in grid order.
    pub trace: Vec<TraceEntry>,
}

impl TuningResult {
    /// Writes the trace as CSV with one row per grid point.
    pub fn write_trace_csv(&self, mut writer: impl std::io::Write) -> std::io::Result<()> {
        writeln!(writer, "phi,aut,error,accepted")?;
        for entry in &self.trace {
            writeln!(
                writer,
                "{},{},{},{}",
                entry.phi, entry.aut, entry.error, entry.accepted
            )?;
        }
        Ok(())
    }
}

/// Errors from the ratio search.
#[derive(Debug, Error)]
pub enum TuningError {
    #[error("grid step must lie strictly between 0 and 1 (got {0})")]
    BadStepSize(f64),
    #[error("error cap must lie in [0, 1] (got {0})")]
    BadErrorCap(f64),
    #[error("validation fraction must lie strictly between 0 and 1 (got {0})")]
    BadValidationFraction(f64),
    #[error("validation must be divided into at least 2 slots (got {0})")]
    BadValidationSlots(usize),
    #[error("the {block} block is empty after the temporal cut")]
    EmptyBlock { block: &'static str },
    #[error("the {block} block holds a single class")]
    SingleClass { block: &'static str },
    #[error("validation slot {index} holds no samples")]
    EmptyValidationSlot { index: usize },
    #[error(
        "validation malware ratio {achieved:.4} misses the target {target:.4} beyond tolerance"
    )]
    ValidationImbalance { achieved: f64, target: f64 },
    #[error("no ratio on the grid produced a trainable candidate set")]
    NoTrainableGridPoint,
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Searches the grid φ = μ, 2μ, … < 1.0 for the training malware ratio
/// that maximizes the validation area-under-time of `config.target`.
///
/// The training samples are cut by date into an earlier proper-training
/// block and a later validation block (the last `val_fraction` of the
/// window). Validation is rebalanced to `balance.sigma_hat` and divided
/// into `val_slots` equal-duration slots. The baseline trains on the
/// proper block at σ̂; each grid point retrains after moving the proper
/// block's ratio to φ — shedding the goodware the baseline is most
/// certain about when raising the ratio, or shedding malware uniformly at
/// random when lowering it. A grid point is accepted only when it strictly
/// improves the running best AUT and its pooled validation error stays
/// within `e_max`; ties therefore keep the smaller φ.
pub fn tune_training_ratio(
    train: &[&Sample],
    spec: &LearnerSpec,
    balance: &ClassBalance,
    config: &TuningConfig,
) -> Result<TuningResult, TuningError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TuningError::EmptyBlock { block: "training" });
    }

    // Date cut: validation is the temporally last val_fraction of the span.
    let window_end = train.iter().map(|s| s.timestamp).max().expect("non-empty");
    let (proper, validation, cutoff) = split_by_recency(train, config.val_fraction);
    check_block(&proper, "proper training")?;
    check_block(&validation, "validation")?;
    debug_assert!(check_c1(proper.iter().copied(), validation.iter().copied()).is_ok());

    // Validation mirrors deployment: rebalance it to σ̂ and verify the result.
    let validation = rebalance(&validation, balance.sigma_hat, config.seed, None)?;
    let achieved = class_ratio(validation.iter().copied())?;
    if !check_c3(achieved, balance.sigma_hat, balance.tolerance).is_ok() {
        return Err(TuningError::ValidationImbalance {
            achieved,
            target: balance.sigma_hat,
        });
    }
    let slots = slot_validation(&validation, cutoff, window_end, config.val_slots)?;

    let dimension = train
        .iter()
        .filter_map(|s| s.features.max_index())
        .max()
        .map_or(0, |index| index as usize + 1);

    // Baseline: train at σ̂; its AUT is the score every grid point must beat.
    let baseline_train = rebalance(&proper, balance.sigma_hat, config.seed, None)?;
    let baseline = fit(spec, &baseline_train, dimension)?;
    let (baseline_curve, _) = score_slots(&baseline, &slots, config.target)?;
    let baseline_aut = aut(&baseline_curve, config.val_slots)?;

    // Scores under the baseline rank the proper block's goodware: the ones
    // nearest the boundary are kept when goodware must be shed.
    let proper_goodware: Vec<&Sample> = proper
        .iter()
        .copied()
        .filter(|s| s.label == Label::Goodware)
        .collect();
    let mut goodware_priority = HashMap::with_capacity(proper_goodware.len());
    for (sample, prediction) in proper_goodware
        .iter()
        .zip(predict(&baseline, &proper_goodware)?)
    {
        goodware_priority.insert(sample.id.clone(), -prediction.score.abs());
    }

    let mut phi_star = balance.sigma_hat;
    let mut p_star = baseline_aut;
    let mut trace = Vec::new();
    let mut trainable = 0usize;

    for step in 1.. {
        let phi = f64::from(step) * config.mu;
        if phi >= 1.0 - 1e-9 {
            break;
        }
        let candidate = match rebalance(&proper, phi, config.seed, Some(&goodware_priority)) {
            Ok(candidate) => candidate,
            Err(SpatialError::TargetUnreachable { .. }) => continue,
            Err(error) => return Err(error.into()),
        };
        let model = match fit(spec, &candidate, dimension) {
            Ok(model) => model,
            Err(LearnerError::SingleClass | LearnerError::EmptyTrain) => continue,
            Err(error) => return Err(error.into()),
        };
        trainable += 1;

        let (curve, pooled) = score_slots(&model, &slots, config.target)?;
        let candidate_aut = aut(&curve, config.val_slots)?;
        let candidate_error = error_rate(config.target, &pooled).value;
        let accepted = candidate_aut > p_star && candidate_error <= config.e_max;
        if accepted {
            p_star = candidate_aut;
            phi_star = phi;
        }
        trace.push(TraceEntry {
            phi,
            aut: candidate_aut,
            error: candidate_error,
            accepted,
        });
    }

    if trainable == 0 {
        return Err(TuningError::NoTrainableGridPoint);
    }

    Ok(TuningResult {
        phi_star,
        p_star,
        sigma_hat: balance.sigma_hat,
        baseline_aut,
        trace,
    })
}

fn check_block(block: &[&Sample], name: &'static str) -> Result<(), TuningError> {
    if block.is_empty() {
        return Err(TuningError::EmptyBlock { block: name });
    }
    let malware = block.iter().filter(|s| s.label == Label::Malware).count();
    let goodware = block.iter().filter(|s| s.label == Label::Goodware).count();
    if malware == 0 || goodware == 0 {
        return Err(TuningError::SingleClass { block: name });
    }
    Ok(())
}

/// Moves a sample list to the target malware ratio by shedding whichever
/// class is over-represented. `gw_priority` (id → score, higher kept)
/// steers goodware reduction; malware reduction is always uniform.
pub(crate) fn rebalance<'a>(
    samples: &[&'a Sample],
    target: f64,
    seed: u64,
    gw_priority: Option<&HashMap<String, f64>>,
) -> Result<Vec<&'a Sample>, SpatialError> {
    let natural = class_ratio(samples.iter().copied())?;
    if (target - natural).abs() < 1e-12 {
        Ok(samples.to_vec())
    } else if target > natural {
        downsample_to_ratio(samples, target, Label::Goodware, seed, gw_priority)
    } else {
        downsample_to_ratio(samples, target, Label::Malware, seed, None)
    }
}

/// Divides the validation window into `n` consecutive slots of (near-)equal
/// duration, splitting the remainder days across the earliest slots.
fn slot_validation<'a>(
    validation: &[&'a Sample],
    window_start: NaiveDate,
    window_end: NaiveDate,
    n: usize,
) -> Result<Vec<(NaiveDate, Vec<&'a Sample>)>, TuningError> {
    let total_days = (window_end - window_start).num_days() + 1;
    let base = total_days / n as i64;
    let remainder = total_days % n as i64;
    let mut slots = Vec::with_capacity(n);
    let mut start = window_start;
    for index in 0..n {
        let length = base + i64::from((index as i64) < remainder);
        let end = start + Duration::days(length);
        let members: Vec<&Sample> = validation
            .iter()
            .copied()
            .filter(|s| s.timestamp >= start && s.timestamp < end)
            .collect();
        if members.is_empty() {
            return Err(TuningError::EmptyValidationSlot { index });
        }
        slots.push((start, members));
        start = end;
    }
    Ok(slots)
}

/// Scores each validation slot with the model and returns the per-slot
/// target-metric curve plus the pooled confusion counts.
fn score_slots(
    model: &TrainedModel,
    slots: &[(NaiveDate, Vec<&Sample>)],
    target: MetricKind,
) -> Result<(DecayCurve, ConfusionCounts), TuningError> {
    let mut counted = Vec::with_capacity(slots.len());
    let mut pooled = ConfusionCounts::default();
    for (start, members) in slots {
        let predictions = predict(model, members)?;
        let y_true: Vec<Label> = members.iter().map(|s| s.label).collect();
        let y_pred: Vec<Label> = predictions.iter().map(|p| p.label).collect();
        let counts = confusion(&y_true, &y_pred)?;
        pooled.absorb(&counts);
        counted.push((*start, counts));
    }
    let curve = decay_curve_from_counts(&counted, target, CurveMode::Point)?;
    Ok((curve, pooled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FeatureVector;

    fn day(offset: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date") + chrono::Days::new(offset)
    }

    fn sample(id: &str, offset: u64, label: Label, x: f64) -> Sample {
        Sample {
            id: id.to_string(),
            timestamp: day(offset),
            label,
            features: FeatureVector::from_pairs(vec![(0, x)]).expect("valid features"),
        }
    }

    /// One sample per day for 90 days, alternating goodware (x ≈ −1) and
    /// malware (x ≈ +1): linearly separable at any class ratio, balanced
    /// at exactly 1/2.
    fn separable_stream() -> Vec<Sample> {
        (0..90)
            .map(|i| {
                let jitter = 0.01 * (i % 7) as f64;
                if i % 2 == 0 {
                    sample(&format!("g{i}"), i, Label::Goodware, -1.0 - jitter)
                } else {
                    sample(&format!("m{i}"), i, Label::Malware, 1.0 + jitter)
                }
            })
            .collect()
    }

    fn refs(samples: &[Sample]) -> Vec<&Sample> {
        samples.iter().collect()
    }

    fn config(mu: f64, e_max: f64) -> TuningConfig {
        TuningConfig {
            mu,
            target: MetricKind::F1,
            e_max,
            val_fraction: 1.0 / 3.0,
            val_slots: 2,
            seed: 7,
        }
    }

    fn balance(sigma_hat: f64) -> ClassBalance {
        ClassBalance::new(sigma_hat, crate::spatial::DEFAULT_C3_TOLERANCE).expect("valid balance")
    }

    #[test]
    fn stationary_separable_stream_keeps_the_baseline() {
        let samples = separable_stream();
        let spec = LearnerSpec::linear_svm(3);
        let result = tune_training_ratio(
            &refs(&samples),
            &spec,
            &balance(0.5),
            &config(0.25, 1.0),
        )
        .unwrap();

        // Every candidate stays perfectly separable, so nothing strictly
        // beats the baseline and the starting ratio wins.
        assert_eq!(result.phi_star, 0.5);
        assert_eq!(result.p_star, 1.0);
        assert_eq!(result.baseline_aut, 1.0);
        let phis: Vec<f64> = result.trace.iter().map(|e| e.phi).collect();
        assert_eq!(phis, vec![0.25, 0.5, 0.75]);
        assert!(result.trace.iter().all(|e| !e.accepted));
        assert!(result.trace.iter().all(|e| e.aut == 1.0 && e.error == 0.0));
    }

    #[test]
    fn zero_error_cap_rejects_every_imperfect_candidate() {
        // Three malware in the validation window masquerade as goodware,
        // so every model misses them and carries a nonzero error rate.
        let mut samples = separable_stream();
        for s in samples.iter_mut().filter(|s| s.label == Label::Malware) {
            let offset = (s.timestamp - day(0)).num_days();
            if (61..=65).contains(&offset) {
                s.features = FeatureVector::from_pairs(vec![(0, -1.0)]).expect("valid features");
            }
        }
        let spec = LearnerSpec::linear_svm(3);
        let result = tune_training_ratio(
            &refs(&samples),
            &spec,
            &balance(0.5),
            &config(0.25, 0.0),
        )
        .unwrap();

        assert_eq!(result.phi_star, 0.5);
        assert_eq!(result.p_star, result.baseline_aut);
        assert!(!result.trace.is_empty());
        assert!(result.trace.iter().all(|e| !e.accepted));
        assert!(result.trace.iter().all(|e| e.error > 0.0));
    }

    #[test]
    fn search_is_deterministic() {
        let samples = separable_stream();
        let spec = LearnerSpec::linear_svm(3);
        let run = || {
            tune_training_ratio(&refs(&samples), &spec, &balance(0.5), &config(0.2, 0.5)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn accepted_entry_is_the_argmax_under_the_error_cap() {
        // Malware drawn from two interleaved feature values, one of which
        // collides with goodware: at low training ratios the collided mode
        // is sacrificed, at higher ratios it is recovered, so the grid has
        // something to find. Verify the bookkeeping, not the learning: the
        // returned phi_star must match a brute-force scan of the trace.
        let mut samples = Vec::new();
        for i in 0..120u64 {
            if i % 3 == 0 {
                samples.push(sample(&format!("m{i}"), i, Label::Malware, 0.8));
            } else if i % 3 == 1 {
                samples.push(sample(&format!("m{i}"), i, Label::Malware, -0.4));
            } else {
                samples.push(sample(&format!("g{i}"), i, Label::Goodware, -1.2));
            }
        }
        let spec = LearnerSpec::linear_svm(3);
        let cfg = TuningConfig {
            mu: 0.2,
            target: MetricKind::F1,
            e_max: 0.6,
            val_fraction: 1.0 / 3.0,
            val_slots: 2,
            seed: 11,
        };
        let result =
            tune_training_ratio(&refs(&samples), &spec, &balance(2.0 / 3.0), &cfg).unwrap();

        let mut best_phi = result.sigma_hat;
        let mut best_aut = result.baseline_aut;
        for entry in &result.trace {
            let expect_accept = entry.aut > best_aut && entry.error <= cfg.e_max;
            assert_eq!(entry.accepted, expect_accept, "entry {entry:?}");
            if expect_accept {
                best_aut = entry.aut;
                best_phi = entry.phi;
            }
        }
        assert_eq!(result.phi_star, best_phi);
        assert_eq!(result.p_star, best_aut);
        // No rejected entry may dominate the winner.
        for entry in &result.trace {
            assert!(!(entry.aut > result.p_star && entry.error <= cfg.e_max));
        }
    }

    #[test]
    fn single_date_training_has_no_proper_block() {
        let samples: Vec<Sample> = (0..10)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Goodware } else { Label::Malware };
                sample(&format!("s{i}"), 0, label, if i % 2 == 0 { -1.0 } else { 1.0 })
            })
            .collect();
        let spec = LearnerSpec::linear_svm(3);
        let result = tune_training_ratio(&refs(&samples), &spec, &balance(0.5), &config(0.25, 1.0));
        assert!(matches!(
            result,
            Err(TuningError::EmptyBlock { block: "proper training" })
        ));
    }

    #[test]
    fn gap_in_validation_dates_is_an_error() {
        // Samples cover days 0..=74 plus a lone day-89 straggler, so the
        // validation window [60, 89] has a dead stretch and one of its four
        // slots ends up empty.
        let mut samples: Vec<Sample> = (0..75)
            .map(|i| {
                if i % 2 == 0 {
                    sample(&format!("g{i}"), i, Label::Goodware, -1.0)
                } else {
                    sample(&format!("m{i}"), i, Label::Malware, 1.0)
                }
            })
            .collect();
        samples.push(sample("late", 89, Label::Goodware, -1.0));
        let spec = LearnerSpec::linear_svm(3);
        let mut cfg = config(0.25, 1.0);
        cfg.val_slots = 4;
        // Keep validation at its natural balance so the rebalancing step
        // cannot mask the date gap.
        let natural = 8.0 / 16.0;
        let result = tune_training_ratio(&refs(&samples), &spec, &balance(natural), &cfg);
        assert!(matches!(result, Err(TuningError::EmptyValidationSlot { .. })));
    }

    #[test]
    fn config_validation_rejects_out_of_range_settings() {
        let samples = separable_stream();
        let spec = LearnerSpec::linear_svm(3);
        let cases = [
            (config(0.0, 1.0), "mu zero"),
            (config(1.0, 1.0), "mu one"),
            (config(0.25, 1.5), "e_max above one"),
            (
                TuningConfig {
                    val_fraction: 1.0,
                    ..config(0.25, 1.0)
                },
                "val_fraction one",
            ),
            (
                TuningConfig {
                    val_slots: 1,
                    ..config(0.25, 1.0)
                },
                "single slot",
            ),
        ];
        for (cfg, what) in cases {
            assert!(
                tune_training_ratio(&refs(&samples), &spec, &balance(0.5), &cfg).is_err(),
                "expected rejection: {what}"
            );
        }
    }

    #[test]
    fn trace_round_trips_through_json_and_csv() {
        let samples = separable_stream();
        let spec = LearnerSpec::linear_svm(3);
        let result =
            tune_training_ratio(&refs(&samples), &spec, &balance(0.5), &config(0.25, 1.0))
                .unwrap();

        let json = serde_json::to_string(&result).unwrap();
        let back: TuningResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, result);

        let mut csv = Vec::new();
        result.write_trace_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "phi,aut,error,accepted");
        assert_eq!(lines.len(), 1 + result.trace.len());
        assert!(lines[1].starts_with("0.25,"));
    }

    #[test]
    fn terse_config_json_fills_in_defaults() {
        let cfg: TuningConfig =
            serde_json::from_str(r#"{"mu": 0.1, "target": "f1", "e_max": 0.2}"#).unwrap();
        assert_eq!(cfg.val_fraction, 1.0 / 3.0);
        assert_eq!(cfg.val_slots, 4);
        assert_eq!(cfg.seed, 0);
    }
}

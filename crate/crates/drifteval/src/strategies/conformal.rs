//! Rejection strategy: keep the model frozen but quarantine its least
//! reliable decisions.
//!
//! A held-out calibration block (the temporally last part of the training
//! data) supplies per-class reference distributions of nonconformity
//! scores. At test time every prediction receives a p-value — the fraction
//! of same-class calibration scores at least as nonconforming as the test
//! sample's. Predictions whose p-value falls below the class threshold are
//! rejected into quarantine; metrics are computed over the kept samples
//! only, and the quarantine size is charged to the ledger.

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Sample};
use crate::learners::{fit, predict, predict_one, LearnerSpec, ModelKind, Prediction, TrainedModel};
use crate::temporal::split_by_recency;

use super::{
    assemble, scored_confusion, LabelStore, SlotRecord, SlotSamples, StrategyError, StrategyId,
    StrategyRun,
};

fn default_calibration_fraction() -> f64 {
    1.0 / 3.0
}

/// Settings for [`run_rejection`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionConfig {
    /// Fraction of the training window (temporally last, by date) withheld
    /// from fitting and used as the calibration block.
    #[serde(default = "default_calibration_fraction")]
    pub calibration_fraction: f64,
    /// Reject goodware verdicts with p-value below this; 0 never rejects,
    /// 1 always rejects.
    pub goodware_threshold: f64,
    /// Same, for malware verdicts.
    pub malware_threshold: f64,
}

impl RejectionConfig {
    fn validate(&self) -> Result<(), StrategyError> {
        check_fraction("calibration_fraction", self.calibration_fraction)?;
        if self.calibration_fraction <= 0.0 || self.calibration_fraction >= 1.0 {
            return Err(StrategyError::BadFraction {
                name: "calibration_fraction",
                value: self.calibration_fraction,
            });
        }
        check_fraction("goodware_threshold", self.goodware_threshold)?;
        check_fraction("malware_threshold", self.malware_threshold)?;
        Ok(())
    }

    fn threshold(&self, label: Label) -> f64 {
        match label {
            Label::Malware => self.malware_threshold,
            _ => self.goodware_threshold,
        }
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), StrategyError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(StrategyError::BadFraction { name, value })
    }
}

/// Nonconformity of a sample under a hypothesized label: how unusual the
/// sample would be if that label were true. Larger is less conforming.
pub fn ncm(model: &TrainedModel, sample: &Sample, label: Label) -> Result<f64, StrategyError> {
    let prediction = predict_one(model, sample)?;
    ncm_of_prediction(model.kind(), &prediction, label)
}

/// [`ncm`] when the prediction is already at hand. Margin-based models use
/// the signed distance from the boundary toward the hypothesized class;
/// probabilistic models use one minus the class probability.
pub fn ncm_of_prediction(
    kind: ModelKind,
    prediction: &Prediction,
    label: Label,
) -> Result<f64, StrategyError> {
    let Some(is_malware) = label.as_binary() else {
        return Err(StrategyError::GraywareUnsupported);
    };
    Ok(match (kind, is_malware) {
        (ModelKind::LinearSvm, true) => -prediction.score,
        (ModelKind::LinearSvm, false) => prediction.score,
        (_, true) => 1.0 - prediction.prob_malware,
        (_, false) => prediction.prob_malware,
    })
}

/// Fraction of calibration scores at least as nonconforming as the test
/// score: `|{αᵢ ≥ α}| / n`. High p-values mean the sample looks ordinary
/// for the class; low p-values flag outliers.
pub fn pvalue(calibration: &[f64], test: f64) -> Result<f64, StrategyError> {
    if calibration.is_empty() {
        return Err(StrategyError::EmptyCalibration {
            label: Label::Goodware,
        });
    }
    let at_least = calibration.iter().filter(|&&alpha| alpha >= test).count();
    Ok(at_least as f64 / calibration.len() as f64)
}

/// Per-class calibration scores under true labels.
struct CalibrationScores {
    goodware: Vec<f64>,
    malware: Vec<f64>,
}

impl CalibrationScores {
    fn compute(model: &TrainedModel, calibration: &[&Sample]) -> Result<Self, StrategyError> {
        let mut goodware = Vec::new();
        let mut malware = Vec::new();
        for &sample in calibration {
            let score = ncm(model, sample, sample.label)?;
            match sample.label {
                Label::Malware => malware.push(score),
                Label::Goodware => goodware.push(score),
                Label::Grayware => return Err(StrategyError::GraywareUnsupported),
            }
        }
        if goodware.is_empty() {
            return Err(StrategyError::EmptyCalibration {
                label: Label::Goodware,
            });
        }
        if malware.is_empty() {
            return Err(StrategyError::EmptyCalibration {
                label: Label::Malware,
            });
        }
        Ok(Self { goodware, malware })
    }

    fn for_label(&self, label: Label) -> &[f64] {
        match label {
            Label::Malware => &self.malware,
            _ => &self.goodware,
        }
    }
}

/// Withholds the calibration block, fits on the rest, and predicts every
/// slot with the frozen model, quarantining predictions whose p-value under
/// the predicted class falls below that class's threshold. A threshold of
/// 1.0 rejects unconditionally (attained p-values include 1.0, so a strict
/// comparison alone could not express "reject everything"). Kept samples
/// alone feed the metrics; the ledger charges every rejection and no
/// labeling.
pub fn run_rejection(
    spec: &LearnerSpec,
    train: &[&Sample],
    slots: &[SlotSamples],
    labels: &dyn LabelStore,
    config: &RejectionConfig,
    dimension: usize,
) -> Result<StrategyRun, StrategyError> {
    config.validate()?;
    if train.is_empty() {
        return Err(StrategyError::EmptyBlock { block: "training" });
    }
    let (proper, calibration, _) = split_by_recency(train, config.calibration_fraction);
    if proper.is_empty() {
        return Err(StrategyError::EmptyBlock { block: "proper training" });
    }
    if calibration.is_empty() {
        return Err(StrategyError::EmptyBlock { block: "calibration" });
    }

    let model = fit(spec, &proper, dimension)?;
    let scores = CalibrationScores::compute(&model, &calibration)?;

    let mut records = Vec::with_capacity(slots.len());
    for (k, slot) in slots.iter().enumerate() {
        let predictions = predict(&model, &slot.samples)?;

        let mut rejected_flags = vec![false; predictions.len()];
        let mut rejected = Vec::new();
        for (i, (sample, prediction)) in slot.samples.iter().zip(&predictions).enumerate() {
            let verdict = prediction.label;
            let threshold = config.threshold(verdict);
            let reject = if threshold >= 1.0 {
                true
            } else {
                let alpha = ncm_of_prediction(model.kind(), prediction, verdict)?;
                let p = pvalue(scores.for_label(verdict), alpha)?;
                p < threshold
            };
            if reject {
                rejected_flags[i] = true;
                rejected.push(sample.id.clone());
            }
        }
        labels.slot_predicted(k);

        let kept_samples: Vec<&Sample> = slot
            .samples
            .iter()
            .zip(&rejected_flags)
            .filter(|(_, &r)| !r)
            .map(|(&s, _)| s)
            .collect();
        let kept_predictions: Vec<Prediction> = predictions
            .iter()
            .zip(&rejected_flags)
            .filter(|(_, &r)| !r)
            .map(|(p, _)| *p)
            .collect();
        let counts = scored_confusion(&kept_samples, &kept_predictions, labels)?;

        records.push(SlotRecord {
            start: slot.start,
            predictions: super::tag_ids(&slot.samples, predictions),
            rejected,
            labeled: Vec::new(),
            counts,
        });
    }

    assemble(
        StrategyId::Rejection {
            goodware_threshold: config.goodware_threshold,
            malware_threshold: config.malware_threshold,
            calibration_fraction: config.calibration_fraction,
        },
        records,
    )
}

/// Picks the largest per-class thresholds whose rejection rate on the
/// calibration block itself stays within `max_rejection_rate`. The model is
/// fit exactly as [`run_rejection`] will fit it; each calibration sample is
/// then treated like a test sample (p-value under its predicted class), and
/// the threshold for each class is the highest attainable value rejecting
/// at most the allowed fraction of that class's verdicts.
pub fn calibrate_thresholds(
    spec: &LearnerSpec,
    train: &[&Sample],
    dimension: usize,
    calibration_fraction: f64,
    max_rejection_rate: f64,
) -> Result<RejectionConfig, StrategyError> {
    check_fraction("max_rejection_rate", max_rejection_rate)?;
    let probe = RejectionConfig {
        calibration_fraction,
        goodware_threshold: 0.0,
        malware_threshold: 0.0,
    };
    probe.validate()?;
    if train.is_empty() {
        return Err(StrategyError::EmptyBlock { block: "training" });
    }
    let (proper, calibration, _) = split_by_recency(train, calibration_fraction);
    if proper.is_empty() {
        return Err(StrategyError::EmptyBlock { block: "proper training" });
    }
    if calibration.is_empty() {
        return Err(StrategyError::EmptyBlock { block: "calibration" });
    }

    let model = fit(spec, &proper, dimension)?;
    let scores = CalibrationScores::compute(&model, &calibration)?;

    // P-values of the calibration block's own verdicts, split by verdict.
    let mut goodware_pvalues = Vec::new();
    let mut malware_pvalues = Vec::new();
    for prediction in predict(&model, &calibration)? {
        let verdict = prediction.label;
        let alpha = ncm_of_prediction(model.kind(), &prediction, verdict)?;
        let p = pvalue(scores.for_label(verdict), alpha)?;
        match verdict {
            Label::Malware => malware_pvalues.push(p),
            _ => goodware_pvalues.push(p),
        }
    }

    Ok(RejectionConfig {
        calibration_fraction,
        goodware_threshold: largest_safe_threshold(goodware_pvalues, max_rejection_rate),
        malware_threshold: largest_safe_threshold(malware_pvalues, max_rejection_rate),
    })
}

/// Largest threshold t with |{p < t}| ≤ ⌊cap · n⌋. With no observed
/// verdicts for the class, returns 0 (reject nothing of it).
fn largest_safe_threshold(mut pvalues: Vec<f64>, cap: f64) -> f64 {
    if pvalues.is_empty() {
        return 0.0;
    }
    pvalues.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let allowed = (cap * pvalues.len() as f64).floor() as usize;
    if allowed >= pvalues.len() {
        1.0
    } else {
        // Rejection is strict (p < t), so t equal to the (allowed+1)-th
        // smallest p-value rejects at most `allowed` samples.
        pvalues[allowed]
    }
}

//! Deployment strategies against time decay, with cost accounting.
//!
//! Once a classifier ships, its performance erodes as the data drifts. The
//! runners in this module simulate the standard mitigations over a sequence
//! of timestamped test slots and charge their price to a [`CostLedger`]:
//!
//! * [`run_no_update`] — the frozen baseline: predict every slot with the
//!   initial model, cost-free.
//! * [`run_incremental_retrain`] — after predicting a slot, reveal all of
//!   its true labels, fold it into training, and refit; labeling cost is
//!   the full test size.
//! * [`run_active_learning`] — reveal labels only for the per-slot samples
//!   the model is least certain about, within a budget.
//! * [`run_rejection`] (in [`conformal`]) — keep the model frozen but
//!   quarantine the least reliable decisions instead of answering.
//!
//! True labels live behind the [`LabelStore`] trait rather than being read
//! from the test samples directly. Runners announce each slot via
//! [`LabelStore::slot_predicted`] before touching its labels, which lets a
//! tracing store verify that no strategy ever consumed a label before its
//! predictions were on the record.

mod conformal;

pub use conformal::{calibrate_thresholds, ncm, ncm_of_prediction, pvalue, run_rejection, RejectionConfig};

use std::collections::{HashMap, HashSet};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, Sample};
use crate::learners::{fit, predict, LearnerError, LearnerSpec, Prediction, TrainedModel};
use crate::metrics::{
    aut_values, decay_curve_from_counts, metric, ConfusionCounts, CurveMode, DecayCurve,
    MetricError, MetricKind,
};

/// Read-only oracle for test-time true labels.
///
/// Strategies must call [`LabelStore::slot_predicted`] for a slot before
/// requesting any of that slot's labels, so stores can audit access order.
pub trait LabelStore {
    /// True label of the sample, or `None` when the id is unknown.
    fn true_label(&self, id: &str) -> Option<Label>;

    /// Hook invoked the moment a slot's predictions are finalized (before
    /// any label of that slot may be read). The default does nothing.
    fn slot_predicted(&self, slot_index: usize) {
        let _ = slot_index;
    }
}

/// [`LabelStore`] backed by a plain id → label map.
#[derive(Debug, Clone, Default)]
pub struct CorpusLabels {
    map: HashMap<String, Label>,
}

impl CorpusLabels {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Self {
        Self {
            map: samples
                .into_iter()
                .map(|s| (s.id.clone(), s.label))
                .collect(),
        }
    }
}

impl LabelStore for CorpusLabels {
    fn true_label(&self, id: &str) -> Option<Label> {
        self.map.get(id).copied()
    }
}

/// One test slot handed to a strategy: a window start date and the samples
/// (features + ids) falling inside it.
#[derive(Debug, Clone)]
pub struct SlotSamples<'a> {
    pub start: NaiveDate,
    pub samples: Vec<&'a Sample>,
}

/// Which strategy produced a run, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum StrategyId {
    NoUpdate,
    IncrementalRetrain,
    ActiveLearning {
        budget: f64,
    },
    Rejection {
        goodware_threshold: f64,
        malware_threshold: f64,
        calibration_fraction: f64,
    },
}

impl StrategyId {
    /// Short name used in CSV outputs.
    #[must_use]
    pub fn name(&self) -> &'static str {
        match self {
            StrategyId::NoUpdate => "no_update",
            StrategyId::IncrementalRetrain => "incremental_retrain",
            StrategyId::ActiveLearning { .. } => "active_learning",
            StrategyId::Rejection { .. } => "rejection",
        }
    }
}

/// Labeling and quarantine totals, with the per-slot breakdown they are
/// summed from. `labeling_cost` counts test objects whose true labels the
/// strategy consumed for retraining; labels read only to *score* a finished
/// slot are the experimenter's bookkeeping and are not charged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub labeling_cost: u64,
    pub quarantine_cost: u64,
    pub per_slot: Vec<SlotCosts>,
}

/// One slot's share of the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotCosts {
    pub labeled: u64,
    pub rejected: u64,
}

impl CostLedger {
    fn from_slots(slots: impl IntoIterator<Item = SlotCosts>) -> Self {
        let per_slot: Vec<SlotCosts> = slots.into_iter().collect();
        Self {
            labeling_cost: per_slot.iter().map(|s| s.labeled).sum(),
            quarantine_cost: per_slot.iter().map(|s| s.rejected).sum(),
            per_slot,
        }
    }

    /// True iff the totals equal the per-slot sums.
    #[must_use]
    pub fn consistent(&self) -> bool {
        self.labeling_cost == self.per_slot.iter().map(|s| s.labeled).sum::<u64>()
            && self.quarantine_cost == self.per_slot.iter().map(|s| s.rejected).sum::<u64>()
    }
}

/// Everything a strategy did in one slot. `predictions` covers every sample
/// of the slot (rejected ones included — they are predicted first, then
/// quarantined); `counts` is the kept-only confusion against true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub start: NaiveDate,
    pub predictions: Vec<(String, Prediction)>,
    /// Ids quarantined in this slot (empty for non-rejection strategies).
    pub rejected: Vec<String>,
    /// Ids whose true labels the strategy consumed for retraining.
    pub labeled: Vec<String>,
    pub counts: ConfusionCounts,
}

/// Full outcome of one strategy over a slot sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub strategy: StrategyId,
    pub slots: Vec<SlotRecord>,
    /// Per-slot F1 over kept samples.
    pub point_curve: DecayCurve,
    /// F1 over pooled kept-sample counts of slots 1..k.
    pub cumulative_curve: DecayCurve,
    pub ledger: CostLedger,
    /// Area under the point curve; `None` for runs shorter than 2 slots.
    pub aut_point: Option<f64>,
    /// Area under the cumulative curve; `None` for runs shorter than 2 slots.
    pub aut_cumulative: Option<f64>,
}

impl StrategyRun {
    /// Writes the per-slot summary as CSV, one row per slot.
    pub fn write_slot_csv(&self, mut writer: impl Write) -> Result<(), MetricError> {
        writeln!(writer, "slot,strategy,f1,precision,recall,labeled,rejected")?;
        for (k, record) in self.slots.iter().enumerate() {
            writeln!(
                writer,
                "{},{},{},{},{},{},{}",
                k + 1,
                self.strategy.name(),
                metric(MetricKind::F1, &record.counts).value,
                metric(MetricKind::Precision, &record.counts).value,
                metric(MetricKind::Recall, &record.counts).value,
                record.labeled.len(),
                record.rejected.len(),
            )?;
        }
        Ok(())
    }
}

/// Errors from strategy simulation.
#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("budget must lie in [0, 1] (got {0})")]
    BadBudget(f64),
    #[error("{name} must lie in [0, 1] (got {value})")]
    BadFraction { name: &'static str, value: f64 },
    #[error("{ids} ids vs {predictions} predictions")]
    LengthMismatch { ids: usize, predictions: usize },
    #[error("the label store knows no label for {id:?}")]
    MissingLabel { id: String },
    #[error("grayware labels are not supported by binary strategies")]
    GraywareUnsupported,
    #[error("no calibration scores for class {label:?}")]
    EmptyCalibration { label: Label },
    #[error("the {block} block is empty after the calibration cut")]
    EmptyBlock { block: &'static str },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Predicts every slot with a fixed model. Nothing is labeled or rejected,
/// so both costs are zero.
pub fn run_no_update(
    model: &TrainedModel,
    slots: &[SlotSamples],
    labels: &dyn LabelStore,
) -> Result<StrategyRun, StrategyError> {
    let mut records = Vec::with_capacity(slots.len());
    for (k, slot) in slots.iter().enumerate() {
        let predictions = predict(model, &slot.samples)?;
        labels.slot_predicted(k);
        let counts = scored_confusion(&slot.samples, &predictions, labels)?;
        records.push(SlotRecord {
            start: slot.start,
            predictions: tag_ids(&slot.samples, predictions),
            rejected: Vec::new(),
            labeled: Vec::new(),
            counts,
        });
    }
    assemble(StrategyId::NoUpdate, records)
}

/// Predicts each slot, then reveals the whole slot's true labels, folds it
/// into the training pool, and refits for the next slot. Labeling cost is
/// the total test size.
pub fn run_incremental_retrain(
    spec: &LearnerSpec,
    train: &[&Sample],
    slots: &[SlotSamples],
    labels: &dyn LabelStore,
    dimension: usize,
) -> Result<StrategyRun, StrategyError> {
    run_with_labeling(spec, train, slots, labels, dimension, 1.0, StrategyId::IncrementalRetrain)
}

/// Like [`run_incremental_retrain`], but per slot only the
/// `⌈budget · slot size⌉` least certain samples have their labels revealed
/// and join the training pool.
pub fn run_active_learning(
    spec: &LearnerSpec,
    train: &[&Sample],
    slots: &[SlotSamples],
    labels: &dyn LabelStore,
    dimension: usize,
    budget: f64,
) -> Result<StrategyRun, StrategyError> {
    if !budget.is_finite() || !(0.0..=1.0).contains(&budget) {
        return Err(StrategyError::BadBudget(budget));
    }
    run_with_labeling(spec, train, slots, labels, dimension, budget, StrategyId::ActiveLearning { budget })
}

/// Ids of the `⌈budget · n⌉` least certain predictions: smallest absolute
/// margin for margin-based learners, probability closest to 1/2 for
/// probabilistic ones. Equal certainties are broken by id, ascending.
pub fn select_uncertain(
    ids: &[&str],
    predictions: &[Prediction],
    uncertainty: crate::learners::Uncertainty,
    budget: f64,
) -> Result<Vec<String>, StrategyError> {
    if !budget.is_finite() || !(0.0..=1.0).contains(&budget) {
        return Err(StrategyError::BadBudget(budget));
    }
    if ids.len() != predictions.len() {
        return Err(StrategyError::LengthMismatch {
            ids: ids.len(),
            predictions: predictions.len(),
        });
    }
    let quota = labeled_quota(budget, ids.len());
    let mut ranked: Vec<(f64, &str)> = ids
        .iter()
        .zip(predictions)
        .map(|(&id, p)| (p.certainty(uncertainty), id))
        .collect();
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite certainty")
            .then_with(|| a.1.cmp(b.1))
    });
    Ok(ranked
        .into_iter()
        .take(quota)
        .map(|(_, id)| id.to_owned())
        .collect())
}

/// `⌈budget · n⌉`, with products a hair under an integer (float noise)
/// snapped down instead of ceiled up: a 1% budget on 300 samples must
/// cost 3 labels, not 4.
fn labeled_quota(budget: f64, n: usize) -> usize {
    let raw = budget * n as f64;
    if (raw - raw.round()).abs() < 1e-9 {
        raw.round() as usize
    } else {
        raw.ceil() as usize
    }
}

/// Shared loop of the label-consuming strategies. Selected samples join the
/// training pool in their original slot order, so a budget of 1.0
/// reproduces incremental retraining exactly.
fn run_with_labeling(
    spec: &LearnerSpec,
    train: &[&Sample],
    slots: &[SlotSamples],
    labels: &dyn LabelStore,
    dimension: usize,
    budget: f64,
    strategy: StrategyId,
) -> Result<StrategyRun, StrategyError> {
    let mut pool: Vec<Sample> = train.iter().map(|&s| s.clone()).collect();
    let mut model = {
        let refs: Vec<&Sample> = pool.iter().collect();
        fit(spec, &refs, dimension)?
    };

    let mut records = Vec::with_capacity(slots.len());
    for (k, slot) in slots.iter().enumerate() {
        let predictions = predict(&model, &slot.samples)?;
        labels.slot_predicted(k);
        let counts = scored_confusion(&slot.samples, &predictions, labels)?;

        let ids: Vec<&str> = slot.samples.iter().map(|s| s.id.as_str()).collect();
        let selected = select_uncertain(&ids, &predictions, spec.uncertainty(), budget)?;
        let chosen: HashSet<&str> = selected.iter().map(String::as_str).collect();

        // Reveal the chosen labels and append in original slot order.
        let mut labeled = Vec::with_capacity(selected.len());
        for &sample in &slot.samples {
            if !chosen.contains(sample.id.as_str()) {
                continue;
            }
            let truth = labels
                .true_label(&sample.id)
                .ok_or_else(|| StrategyError::MissingLabel { id: sample.id.clone() })?;
            let mut owned = sample.clone();
            owned.label = truth;
            pool.push(owned);
            labeled.push(sample.id.clone());
        }

        records.push(SlotRecord {
            start: slot.start,
            predictions: tag_ids(&slot.samples, predictions),
            rejected: Vec::new(),
            labeled,
            counts,
        });

        if k + 1 < slots.len() {
            let refs: Vec<&Sample> = pool.iter().collect();
            model = fit(spec, &refs, dimension)?;
        }
    }
    assemble(strategy, records)
}

/// Pairs each slot sample's id with its prediction.
fn tag_ids(samples: &[&Sample], predictions: Vec<Prediction>) -> Vec<(String, Prediction)> {
    samples
        .iter()
        .zip(predictions)
        .map(|(s, p)| (s.id.clone(), p))
        .collect()
}

/// Confusion counts of predictions against store truth. Used only after the
/// slot's predictions are recorded; these lookups score the slot and are
/// not charged as labeling cost.
fn scored_confusion(
    samples: &[&Sample],
    predictions: &[Prediction],
    labels: &dyn LabelStore,
) -> Result<ConfusionCounts, StrategyError> {
    let mut counts = ConfusionCounts::default();
    for (sample, prediction) in samples.iter().zip(predictions) {
        let truth = labels
            .true_label(&sample.id)
            .ok_or_else(|| StrategyError::MissingLabel { id: sample.id.clone() })?;
        let (Some(t), Some(p)) = (truth.as_binary(), prediction.label.as_binary()) else {
            return Err(StrategyError::GraywareUnsupported);
        };
        counts.record(t, p);
    }
    Ok(counts)
}

/// Builds the curves, areas, and ledger from finished slot records.
fn assemble(strategy: StrategyId, records: Vec<SlotRecord>) -> Result<StrategyRun, StrategyError> {
    let counted: Vec<(NaiveDate, ConfusionCounts)> =
        records.iter().map(|r| (r.start, r.counts)).collect();
    let point_curve = decay_curve_from_counts(&counted, MetricKind::F1, CurveMode::Point)?;
    let cumulative_curve = decay_curve_from_counts(&counted, MetricKind::F1, CurveMode::Cumulative)?;
    let aut_point = maybe_aut(&point_curve)?;
    let aut_cumulative = maybe_aut(&cumulative_curve)?;
    let ledger = CostLedger::from_slots(records.iter().map(|r| SlotCosts {
        labeled: r.labeled.len() as u64,
        rejected: r.rejected.len() as u64,
    }));
    Ok(StrategyRun {
        strategy,
        slots: records,
        point_curve,
        cumulative_curve,
        ledger,
        aut_point,
        aut_cumulative,
    })
}

fn maybe_aut(curve: &DecayCurve) -> Result<Option<f64>, MetricError> {
    if curve.len() < 2 {
        return Ok(None);
    }
    aut_values(&curve.values).map(Some)
}

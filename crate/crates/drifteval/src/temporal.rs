//! Time-aware train/test splitting and temporal consistency checks.
//!
//! The central constraint is temporal ordering: every training sample must
//! strictly precede every test sample ([`check_c1`]), and each test slot must
//! only contain samples from its own time window ([`check_c2`]). Splits built
//! by [`time_aware_split`] satisfy both by construction; the checkers exist
//! so that externally produced splits (or deliberately biased ones, such as
//! [`kfold_split`]) can be diagnosed.
//!
//! All windows are half-open `[start, end)` and month arithmetic follows the
//! calendar (the slot after January ends March 1st minus a month, not 30
//! days later).

use std::collections::HashMap;

use chrono::{Days, Months, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Label, Sample};

/// A calendar duration used for window sizes and slot granularity.
///
/// Days and weeks are interchangeable (a week is exactly seven days); months
/// follow the calendar and cannot be mixed with day-based spans when
/// divisibility matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Span {
    Days(u32),
    Weeks(u32),
    Months(u32),
}

impl Span {
    /// Length in the span's own unit.
    #[must_use]
    pub fn count(self) -> u32 {
        match self {
            Span::Days(n) | Span::Weeks(n) | Span::Months(n) => n,
        }
    }

    fn as_days(self) -> Option<u64> {
        match self {
            Span::Days(n) => Some(u64::from(n)),
            Span::Weeks(n) => Some(u64::from(n) * 7),
            Span::Months(_) => None,
        }
    }

    /// The date `multiples` copies of this span after `date`.
    pub fn advance(self, date: NaiveDate, multiples: u32) -> Result<NaiveDate, SplitError> {
        let result = match self {
            Span::Months(n) => date.checked_add_months(Months::new(n * multiples)),
            other => {
                let days = other.as_days().expect("day-based span") * u64::from(multiples);
                date.checked_add_days(Days::new(days))
            }
        };
        result.ok_or(SplitError::DateOverflow)
    }

    /// The date `multiples` copies of this span before `date`.
    pub fn retreat(self, date: NaiveDate, multiples: u32) -> Result<NaiveDate, SplitError> {
        let result = match self {
            Span::Months(n) => date.checked_sub_months(Months::new(n * multiples)),
            other => {
                let days = other.as_days().expect("day-based span") * u64::from(multiples);
                date.checked_sub_days(Days::new(days))
            }
        };
        result.ok_or(SplitError::DateOverflow)
    }

    /// How many `slot` spans tile this span exactly; errors when the units
    /// are incompatible or the division leaves a remainder.
    pub fn divide_by(self, slot: Span) -> Result<u32, SplitError> {
        let (total, step) = match (self, slot) {
            (Span::Months(s), Span::Months(d)) => (u64::from(s), u64::from(d)),
            (a, b) => match (a.as_days(), b.as_days()) {
                (Some(s), Some(d)) => (s, d),
                _ => return Err(SplitError::MixedUnits { test: self, slot }),
            },
        };
        if step == 0 {
            return Err(SplitError::ZeroSpan);
        }
        if total % step != 0 {
            return Err(SplitError::IndivisibleWindow { test: self, slot });
        }
        Ok(u32::try_from(total / step).expect("slot count fits in u32"))
    }
}

/// Whether testing extends only forward in time from the training window, or
/// also backward (two disjoint test windows on both sides of the training
/// data; the backward window relaxes the strict ordering of [`check_c1`] by
/// design).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Future,
    PastAndFuture,
}

/// What to do with a test slot holding fewer than the minimum sample count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptySlotPolicy {
    /// Fail the split (the default): sparse slots make per-slot metrics
    /// meaningless.
    #[default]
    Error,
    /// Drop the slot and record a warning.
    Skip,
}

/// Parameters of a time-aware split: training window of size `train`
/// starting at `train_start`, followed by a test window of size `test`
/// divided into slots of size `slot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_start: NaiveDate,
    /// Training window size (W).
    pub train: Span,
    /// Testing window size (S).
    pub test: Span,
    /// Test slot granularity (Δ).
    pub slot: Span,
    #[serde(default)]
    pub mode: SplitMode,
    #[serde(default)]
    pub empty_slots: EmptySlotPolicy,
    /// Minimum samples a slot must hold (default 1).
    #[serde(default = "default_min_slot_samples")]
    pub min_slot_samples: usize,
}

fn default_min_slot_samples() -> usize {
    1
}

impl SplitSpec {
    /// Validates the window sizes. Returns advisory warnings (currently:
    /// a test window no longer than the training window).
    pub fn validate(&self) -> Result<Vec<String>, SplitError> {
        if self.train.count() == 0 || self.test.count() == 0 || self.slot.count() == 0 {
            return Err(SplitError::ZeroSpan);
        }
        let slots = self.test.divide_by(self.slot)?;
        if slots == 0 {
            return Err(SplitError::ZeroSpan);
        }
        let mut warnings = Vec::new();
        if let (Some(test_days), Some(train_days)) = (self.test.as_days(), self.train.as_days()) {
            if test_days <= train_days {
                warnings.push(
                    "test window is not longer than the training window; decay estimates will be short"
                        .to_owned(),
                );
            }
        } else if let (Span::Months(test), Span::Months(train)) = (self.test, self.train) {
            if test <= train {
                warnings.push(
                    "test window is not longer than the training window; decay estimates will be short"
                        .to_owned(),
                );
            }
        }
        Ok(warnings)
    }
}

/// One test slot: the half-open interval `[start, end)` and the ids of the
/// samples whose timestamps fall inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSlot {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub sample_ids: Vec<String>,
}

/// A time-aware split: training ids plus ordered test slots. `past_slots`
/// is only populated in [`SplitMode::PastAndFuture`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeAwareSplit {
    pub train: Vec<String>,
    pub slots: Vec<TimeSlot>,
    pub past_slots: Vec<TimeSlot>,
    pub warnings: Vec<String>,
}

/// Errors from split construction and validation.
#[derive(Debug, Error)]
pub enum SplitError {
    #[error("window and slot spans must be positive")]
    ZeroSpan,
    #[error("test window {test:?} is not an integer multiple of slot {slot:?}")]
    IndivisibleWindow { test: Span, slot: Span },
    #[error("cannot divide {test:?} by {slot:?}: month spans cannot mix with day-based spans")]
    MixedUnits { test: Span, slot: Span },
    #[error("date arithmetic overflowed the supported calendar range")]
    DateOverflow,
    #[error("training window [{start}, {end}) contains no samples")]
    EmptyTrain { start: NaiveDate, end: NaiveDate },
    #[error("test slot {index} [{start}, {end}) holds {count} samples, fewer than the minimum {min}")]
    SparseSlot {
        index: usize,
        start: NaiveDate,
        end: NaiveDate,
        count: usize,
        min: usize,
    },
    #[error("all test slots were skipped as sparse; nothing left to evaluate")]
    NoUsableSlots,
    #[error("k-fold needs 2 <= k <= smallest class count; got k={k}, smallest class {minority}")]
    BadFoldCount { k: usize, minority: usize },
}

/// Splits a corpus into a training window and consecutive test slots.
///
/// Training takes `[train_start, train_start+W)`; the test window
/// `[train_start+W, train_start+W+S)` is partitioned into `S/Δ` slots.
/// Samples outside both windows are ignored. The result satisfies the
/// temporal ordering checked by [`check_c1`] by construction.
pub fn time_aware_split(corpus: &Corpus, spec: &SplitSpec) -> Result<TimeAwareSplit, SplitError> {
    let mut warnings = spec.validate()?;
    let slot_count = spec.test.divide_by(spec.slot)?;

    let train_end = spec.train.advance(spec.train_start, 1)?;
    let future_slots = slot_boundaries(train_end, spec.slot, slot_count)?;
    let past_slots = match spec.mode {
        SplitMode::Future => Vec::new(),
        SplitMode::PastAndFuture => {
            let past_start = spec.test.retreat(spec.train_start, 1)?;
            slot_boundaries(past_start, spec.slot, slot_count)?
        }
    };

    let mut train = Vec::new();
    let mut slots: Vec<TimeSlot> = future_slots
        .iter()
        .map(|&(start, end)| TimeSlot {
            start,
            end,
            sample_ids: Vec::new(),
        })
        .collect();
    let mut past: Vec<TimeSlot> = past_slots
        .iter()
        .map(|&(start, end)| TimeSlot {
            start,
            end,
            sample_ids: Vec::new(),
        })
        .collect();

    for sample in corpus.samples() {
        let ts = sample.timestamp;
        if ts >= spec.train_start && ts < train_end {
            train.push(sample.id.clone());
        } else if let Some(slot) = locate(&mut slots, ts) {
            slot.sample_ids.push(sample.id.clone());
        } else if let Some(slot) = locate(&mut past, ts) {
            slot.sample_ids.push(sample.id.clone());
        }
    }

    if train.is_empty() {
        return Err(SplitError::EmptyTrain {
            start: spec.train_start,
            end: train_end,
        });
    }
    enforce_slot_minimum(&mut slots, spec, &mut warnings)?;
    if !past.is_empty() {
        enforce_slot_minimum(&mut past, spec, &mut warnings)?;
    }
    if slots.is_empty() {
        return Err(SplitError::NoUsableSlots);
    }

    Ok(TimeAwareSplit {
        train,
        slots,
        past_slots: past,
        warnings,
    })
}

fn slot_boundaries(
    start: NaiveDate,
    slot: Span,
    count: u32,
) -> Result<Vec<(NaiveDate, NaiveDate)>, SplitError> {
    // Boundaries are computed from the window start in one step each
    // (start + i·Δ) so month-end clamping cannot accumulate.
    let mut bounds = Vec::with_capacity(count as usize);
    for i in 0..count {
        bounds.push((slot.advance(start, i)?, slot.advance(start, i + 1)?));
    }
    Ok(bounds)
}

fn locate(slots: &mut [TimeSlot], ts: NaiveDate) -> Option<&mut TimeSlot> {
    slots
        .iter_mut()
        .find(|slot| ts >= slot.start && ts < slot.end)
}

fn enforce_slot_minimum(
    slots: &mut Vec<TimeSlot>,
    spec: &SplitSpec,
    warnings: &mut Vec<String>,
) -> Result<(), SplitError> {
    let min = spec.min_slot_samples.max(1);
    match spec.empty_slots {
        EmptySlotPolicy::Error => {
            for (index, slot) in slots.iter().enumerate() {
                if slot.sample_ids.len() < min {
                    return Err(SplitError::SparseSlot {
                        index,
                        start: slot.start,
                        end: slot.end,
                        count: slot.sample_ids.len(),
                        min,
                    });
                }
            }
        }
        EmptySlotPolicy::Skip => {
            let mut kept = Vec::with_capacity(slots.len());
            for (index, slot) in slots.drain(..).enumerate() {
                if slot.sample_ids.len() < min {
                    warnings.push(format!(
                        "skipped slot {index} [{}, {}) with {} samples (minimum {min})",
                        slot.start,
                        slot.end,
                        slot.sample_ids.len()
                    ));
                } else {
                    kept.push(slot);
                }
            }
            *slots = kept;
        }
    }
    Ok(())
}

/// Result of the temporal-ordering check: training data must strictly
/// precede test data. `offending_train` lists every training sample whose
/// timestamp is not strictly before all test timestamps; the check passes
/// iff that list is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1Check {
    pub max_train_timestamp: Option<NaiveDate>,
    pub min_test_timestamp: Option<NaiveDate>,
    pub offending_train: Vec<String>,
}

impl C1Check {
    #[must_use]
    pub fn is_ok(&self) -> bool {
        self.offending_train.is_empty()
    }
}

/// Checks that every training sample is strictly older than every test
/// sample. Violations are summarized by the max training timestamp, the min
/// test timestamp, and the list of offending training ids.
pub fn check_c1<'a, I, J>(train: I, test: J) -> C1Check
where
    I: IntoIterator<Item = &'a Sample>,
    J: IntoIterator<Item = &'a Sample>,
{
    let train: Vec<(&str, NaiveDate)> = train
        .into_iter()
        .map(|s| (s.id.as_str(), s.timestamp))
        .collect();
    let max_train_timestamp = train.iter().map(|&(_, ts)| ts).max();
    let min_test_timestamp = test.into_iter().map(|s| s.timestamp).min();

    let offending_train = match min_test_timestamp {
        Some(min_test) => train
            .iter()
            .filter(|&&(_, ts)| ts >= min_test)
            .map(|&(id, _)| id.to_owned())
            .collect(),
        None => Vec::new(),
    };
    C1Check {
        max_train_timestamp,
        min_test_timestamp,
        offending_train,
    }
}

/// Cuts a sample list at the date that sets aside the temporally last
/// `fraction` of its span, returning `(earlier, later, cutoff)`. The later
/// block holds every sample dated on or after the cutoff, so it is strictly
/// newer than the earlier block. Callers must pass a non-empty list and a
/// fraction in (0, 1); either returned block may still come out empty when
/// the dates are too clustered.
pub(crate) fn split_by_recency<'a>(
    samples: &[&'a Sample],
    fraction: f64,
) -> (Vec<&'a Sample>, Vec<&'a Sample>, NaiveDate) {
    let start = samples.iter().map(|s| s.timestamp).min().expect("non-empty");
    let end = samples.iter().map(|s| s.timestamp).max().expect("non-empty");
    let span_days = (end - start).num_days();
    let cut_days = ((1.0 - fraction) * span_days as f64).ceil() as i64;
    let cutoff = start + chrono::Duration::days(cut_days);

    let mut earlier = Vec::new();
    let mut later = Vec::new();
    for &sample in samples {
        if sample.timestamp < cutoff {
            earlier.push(sample);
        } else {
            later.push(sample);
        }
    }
    (earlier, later, cutoff)
}

/// One sample found outside its slot's window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotViolation {
    pub slot_index: usize,
    pub sample_id: String,
    pub timestamp: NaiveDate,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// Per-class date ranges of the training window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWindows {
    pub goodware: (NaiveDate, NaiveDate),
    pub malware: (NaiveDate, NaiveDate),
}

/// Result of the slot-consistency check, plus the per-class training-window
/// diagnostic: goodware and malware drawn from disjoint time ranges is a
/// classic way to smuggle in an artificially easy problem, so it is flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2Report {
    pub slot_violations: Vec<SlotViolation>,
    pub train_class_windows: Option<ClassWindows>,
    pub disjoint_class_windows: bool,
}

impl C2Report {
    #[must_use]
    pub fn is_ok(&self) -> bool {
        self.slot_violations.is_empty() && !self.disjoint_class_windows
    }
}

/// Verifies that every slot member's timestamp lies inside the slot's
/// half-open window, and reports whether the training classes occupy
/// disjoint date ranges.
pub fn check_c2(split: &TimeAwareSplit, corpus: &Corpus) -> C2Report {
    let by_id = corpus.id_index();
    let mut slot_violations = Vec::new();
    for (slot_index, slot) in split.slots.iter().chain(split.past_slots.iter()).enumerate() {
        for id in &slot.sample_ids {
            let Some(&position) = by_id.get(id.as_str()) else {
                continue; // unknown ids are a corpus mismatch, not a window violation
            };
            let ts = corpus.samples()[position].timestamp;
            if ts < slot.start || ts >= slot.end {
                slot_violations.push(SlotViolation {
                    slot_index,
                    sample_id: id.clone(),
                    timestamp: ts,
                    start: slot.start,
                    end: slot.end,
                });
            }
        }
    }

    let mut gw: Option<(NaiveDate, NaiveDate)> = None;
    let mut mw: Option<(NaiveDate, NaiveDate)> = None;
    for id in &split.train {
        let Some(&position) = by_id.get(id.as_str()) else {
            continue;
        };
        let sample = &corpus.samples()[position];
        let range = match sample.label {
            Label::Goodware => &mut gw,
            Label::Malware => &mut mw,
            Label::Grayware => continue,
        };
        *range = Some(match *range {
            None => (sample.timestamp, sample.timestamp),
            Some((lo, hi)) => (lo.min(sample.timestamp), hi.max(sample.timestamp)),
        });
    }
    let (train_class_windows, disjoint) = match (gw, mw) {
        (Some(g), Some(m)) => {
            let disjoint = g.1 < m.0 || m.1 < g.0;
            (
                Some(ClassWindows {
                    goodware: g,
                    malware: m,
                }),
                disjoint,
            )
        }
        _ => (None, false),
    };
    C2Report {
        slot_violations,
        train_class_windows,
        disjoint_class_windows: disjoint,
    }
}

/// One fold's `(train_ids, test_ids)` pair, both in corpus order.
pub type Fold = (Vec<String>, Vec<String>);

/// Stratified k-fold partition, deliberately ignoring time. This is the
/// biased baseline: mixing future samples into training is exactly what
/// [`check_c1`] exists to catch.
///
/// Returns `k` [`Fold`]s, deterministic for a given seed.
pub fn kfold_split(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<Fold>, SplitError> {
    let mut by_class: HashMap<Label, Vec<usize>> = HashMap::new();
    for (position, sample) in corpus.samples().iter().enumerate() {
        by_class.entry(sample.label).or_default().push(position);
    }
    let minority = by_class.values().map(Vec::len).min().unwrap_or(0);
    if k < 2 || k > minority {
        return Err(SplitError::BadFoldCount { k, minority });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; corpus.len()];
    // Fixed class order keeps the RNG stream stable across runs.
    for label in [Label::Goodware, Label::Malware, Label::Grayware] {
        let Some(mut positions) = by_class.remove(&label) else {
            continue;
        };
        positions.shuffle(&mut rng);
        for (i, position) in positions.into_iter().enumerate() {
            fold_of[position] = i % k;
        }
    }

    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (position, sample) in corpus.samples().iter().enumerate() {
            if fold_of[position] == fold {
                test.push(sample.id.clone());
            } else {
                train.push(sample.id.clone());
            }
        }
        folds.push((train, test));
    }
    Ok(folds)
}

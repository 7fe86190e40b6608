//! Confusion-based metrics, per-slot decay curves, and area-under-time.
//!
//! A classifier evaluated over N consecutive test slots yields a curve of
//! per-slot metric values P(X₁..X_N). [`aut`] summarizes such a curve by its
//! trapezoidal mean — 1.0 for a classifier that stays perfect, lower the
//! faster performance decays. Curves come in two modes: `point` (each slot
//! scored alone) and `cumulative` (slot k scored on the pooled confusion
//! counts of slots 1..k — pooled counts, not averaged values).
//!
//! Degenerate 0/0 ratios evaluate to 0.0 with a `degenerate` flag rather
//! than NaN, so curves stay well-defined on slots with no positive
//! predictions while remaining auditable.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

/// Binary confusion counts with malware as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
}

impl ConfusionCounts {
    #[must_use]
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    /// Pools another slot's counts into this one.
    pub fn absorb(&mut self, other: &ConfusionCounts) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.true_neg += other.true_neg;
        self.false_neg += other.false_neg;
    }

    /// Counts one (truth, prediction) pair.
    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.true_pos += 1,
            (false, true) => self.false_pos += 1,
            (false, false) => self.true_neg += 1,
            (true, false) => self.false_neg += 1,
        }
    }
}

/// A metric value plus a flag marking 0/0 evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub degenerate: bool,
}

impl MetricValue {
    fn ratio(numerator: u64, denominator: u64) -> Self {
        if denominator == 0 {
            Self {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Self {
                value: numerator as f64 / denominator as f64,
                degenerate: false,
            }
        }
    }
}

/// Which confusion-based metric a curve or a tuning target refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    F1,
    Precision,
    Recall,
}

impl MetricKind {
    /// Lowercase name used in file outputs.
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::F1 => "f1",
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
        }
    }
}

/// Errors from metric and curve computation.
#[derive(Debug, Error)]
pub enum MetricError {
    #[error("label lists differ in length: {truth} truths vs {predictions} predictions")]
    LengthMismatch { truth: usize, predictions: usize },
    #[error("grayware labels are not supported by binary metrics")]
    GraywareUnsupported,
    #[error("slot {index} holds no predictions")]
    EmptySlot { index: usize },
    #[error("curve has {len} values but N={n} was requested")]
    CurveLengthMismatch { len: usize, n: usize },
    #[error("area under time is undefined for curves shorter than 2 points (got {n})")]
    ShortCurve { n: usize },
    #[error("window size {tau} must be >= 2 and divide the curve length {len}")]
    BadWindow { tau: usize, len: usize },
    #[error("failed to write curve: {0}")]
    Io(#[from] std::io::Error),
}

/// Tallies binary confusion counts from parallel truth/prediction lists.
pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionCounts, MetricError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricError::LengthMismatch {
            truth: y_true.len(),
            predictions: y_pred.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for (truth, prediction) in y_true.iter().zip(y_pred) {
        let (Some(t), Some(p)) = (truth.as_binary(), prediction.as_binary()) else {
            return Err(MetricError::GraywareUnsupported);
        };
        counts.record(t, p);
    }
    Ok(counts)
}

/// TP / (TP + FP).
#[must_use]
pub fn precision(counts: &ConfusionCounts) -> MetricValue {
    MetricValue::ratio(counts.true_pos, counts.true_pos + counts.false_pos)
}

/// TP / (TP + FN).
#[must_use]
pub fn recall(counts: &ConfusionCounts) -> MetricValue {
    MetricValue::ratio(counts.true_pos, counts.true_pos + counts.false_neg)
}

/// Harmonic mean of precision and recall, computed as 2TP/(2TP+FP+FN).
#[must_use]
pub fn f1(counts: &ConfusionCounts) -> MetricValue {
    MetricValue::ratio(
        2 * counts.true_pos,
        2 * counts.true_pos + counts.false_pos + counts.false_neg,
    )
}

/// Dispatches to [`precision`], [`recall`], or [`f1`].
#[must_use]
pub fn metric(kind: MetricKind, counts: &ConfusionCounts) -> MetricValue {
    match kind {
        MetricKind::F1 => f1(counts),
        MetricKind::Precision => precision(counts),
        MetricKind::Recall => recall(counts),
    }
}

/// The error rate that accompanies each optimization target: for f1 the
/// complement of accuracy, for recall the false-positive rate, for
/// precision the false-negative rate.
#[must_use]
pub fn error_rate(target: MetricKind, counts: &ConfusionCounts) -> MetricValue {
    match target {
        MetricKind::F1 => MetricValue::ratio(counts.false_pos + counts.false_neg, counts.total()),
        MetricKind::Recall => MetricValue::ratio(counts.false_pos, counts.true_neg + counts.false_pos),
        MetricKind::Precision => {
            MetricValue::ratio(counts.false_neg, counts.true_pos + counts.false_neg)
        }
    }
}

/// How a decay curve treats history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// Each slot scored on its own predictions.
    Point,
    /// Slot k scored on the pooled confusion counts of slots 1..k.
    Cumulative,
}

impl CurveMode {
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            CurveMode::Point => "point",
            CurveMode::Cumulative => "cumulative",
        }
    }
}

/// A per-slot metric curve. `counts[k]` holds the confusion counts that
/// produced `values[k]` (per-slot counts in point mode, pooled counts in
/// cumulative mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub metric: MetricKind,
    pub mode: CurveMode,
    pub slot_starts: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub counts: Vec<ConfusionCounts>,
}

impl DecayCurve {
    #[must_use]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes the curve as CSV with one row per slot.
    pub fn write_csv(&self, mut writer: impl Write) -> Result<(), MetricError> {
        writeln!(writer, "slot_index,slot_start,metric,mode,value,tp,fp,tn,fn")?;
        for k in 0..self.len() {
            writeln!(
                writer,
                "{},{},{},{},{},{},{},{},{}",
                k + 1,
                self.slot_starts[k],
                self.metric.name(),
                self.mode.name(),
                self.values[k],
                self.counts[k].true_pos,
                self.counts[k].false_pos,
                self.counts[k].true_neg,
                self.counts[k].false_neg,
            )?;
        }
        Ok(())
    }
}

/// One slot's labeled outcomes, ready for curve building.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLabels {
    pub start: NaiveDate,
    pub y_true: Vec<Label>,
    pub y_pred: Vec<Label>,
}

/// Builds a decay curve from per-slot truth/prediction lists. Every slot
/// must hold at least one pair (an all-rejected slot should go through
/// [`decay_curve_from_counts`], which tolerates zero counts).
pub fn decay_curve(
    slots: &[SlotLabels],
    metric_kind: MetricKind,
    mode: CurveMode,
) -> Result<DecayCurve, MetricError> {
    let mut counted = Vec::with_capacity(slots.len());
    for (index, slot) in slots.iter().enumerate() {
        if slot.y_true.is_empty() {
            return Err(MetricError::EmptySlot { index });
        }
        counted.push((slot.start, confusion(&slot.y_true, &slot.y_pred)?));
    }
    decay_curve_from_counts(&counted, metric_kind, mode)
}

/// Builds a decay curve from per-slot confusion counts. Zero-count slots
/// yield degenerate values rather than errors.
pub fn decay_curve_from_counts(
    slots: &[(NaiveDate, ConfusionCounts)],
    metric_kind: MetricKind,
    mode: CurveMode,
) -> Result<DecayCurve, MetricError> {
    let mut slot_starts = Vec::with_capacity(slots.len());
    let mut values = Vec::with_capacity(slots.len());
    let mut degenerate = Vec::with_capacity(slots.len());
    let mut counts = Vec::with_capacity(slots.len());
    let mut pooled = ConfusionCounts::default();

    for &(start, slot_counts) in slots {
        let effective = match mode {
            CurveMode::Point => slot_counts,
            CurveMode::Cumulative => {
                pooled.absorb(&slot_counts);
                pooled
            }
        };
        let m = metric(metric_kind, &effective);
        slot_starts.push(start);
        values.push(m.value);
        degenerate.push(m.degenerate);
        counts.push(effective);
    }

    Ok(DecayCurve {
        metric: metric_kind,
        mode,
        slot_starts,
        values,
        degenerate,
        counts,
    })
}

/// Area under time: the trapezoidal mean of an N-point curve,
/// `1/(N−1) · Σ (P(X_{k+1}) + P(X_k))/2`. A classifier that stays perfect
/// scores exactly 1. Undefined for N < 2.
pub fn aut(curve: &DecayCurve, n: usize) -> Result<f64, MetricError> {
    if curve.len() != n {
        return Err(MetricError::CurveLengthMismatch { len: curve.len(), n });
    }
    aut_values(&curve.values)
}

/// [`aut`] on a bare value slice.
pub fn aut_values(values: &[f64]) -> Result<f64, MetricError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricError::ShortCurve { n });
    }
    // Running mean of the pair means rather than sum-then-divide: a flat
    // curve must return its value bit-for-bit, and the increment (c − c)/k
    // is exactly zero where a sum would accumulate rounding.
    let mut mean = 0.0;
    for (k, pair) in values.windows(2).enumerate() {
        mean += ((pair[0] + pair[1]) / 2.0 - mean) / (k + 1) as f64;
    }
    Ok(mean)
}

/// Splits the curve into consecutive disjoint windows of `tau` points and
/// computes the area under time inside each. Returns `(window end index,
/// value)` pairs with 1-based end indices.
pub fn aut_windows(curve: &DecayCurve, tau: usize) -> Result<Vec<(usize, f64)>, MetricError> {
    if tau < 2 || curve.is_empty() || !curve.len().is_multiple_of(tau) {
        return Err(MetricError::BadWindow {
            tau,
            len: curve.len(),
        });
    }
    let mut out = Vec::with_capacity(curve.len() / tau);
    for (i, window) in curve.values.chunks(tau).enumerate() {
        out.push(((i + 1) * tau, aut_values(window)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(m: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date") + chrono::Months::new(m - 1)
    }

    fn counts(tp: u64, fp: u64, tn: u64, fne: u64) -> ConfusionCounts {
        ConfusionCounts {
            true_pos: tp,
            false_pos: fp,
            true_neg: tn,
            false_neg: fne,
        }
    }

    #[test]
    fn confusion_counts_simple_pairs() {
        let c = confusion(
            &[Label::Malware, Label::Goodware],
            &[Label::Malware, Label::Goodware],
        )
        .unwrap();
        assert_eq!(c, counts(1, 0, 1, 0));

        let c = confusion(&[Label::Malware], &[Label::Goodware]).unwrap();
        assert_eq!(c, counts(0, 0, 0, 1));
    }

    #[test]
    fn confusion_partitions_the_pair_list() {
        let y_true: Vec<Label> = (0..100)
            .map(|i| if i % 3 == 0 { Label::Malware } else { Label::Goodware })
            .collect();
        let y_pred: Vec<Label> = (0..100)
            .map(|i| if i % 4 == 0 { Label::Malware } else { Label::Goodware })
            .collect();
        let c = confusion(&y_true, &y_pred).unwrap();
        assert_eq!(c.total(), 100);
    }

    #[test]
    fn confusion_rejects_mismatched_lengths() {
        assert!(matches!(
            confusion(&[Label::Malware], &[]),
            Err(MetricError::LengthMismatch { truth: 1, predictions: 0 })
        ));
    }

    #[test]
    fn precision_recall_f1_at_point_eight() {
        let c = counts(8, 2, 0, 2);
        assert_eq!(precision(&c).value, 0.8);
        assert_eq!(recall(&c).value, 0.8);
        assert_eq!(f1(&c).value, 0.8);
        assert!(!f1(&c).degenerate);
    }

    #[test]
    fn zero_over_zero_is_flagged_not_nan() {
        let c = counts(0, 0, 5, 0);
        for m in [precision(&c), recall(&c), f1(&c)] {
            assert_eq!(m.value, 0.0);
            assert!(m.degenerate);
        }
    }

    #[test]
    fn two_thirds_example() {
        let c = counts(10, 5, 80, 5);
        assert!((precision(&c).value - 2.0 / 3.0).abs() < 1e-15);
        assert!((recall(&c).value - 2.0 / 3.0).abs() < 1e-15);
        assert!((f1(&c).value - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn error_rates_per_target() {
        let c = counts(10, 5, 80, 5);
        // 1 − accuracy
        assert!((error_rate(MetricKind::F1, &c).value - 0.10).abs() < 1e-15);
        // false-positive rate
        assert!((error_rate(MetricKind::Recall, &c).value - 5.0 / 85.0).abs() < 1e-15);
        // false-negative rate
        assert!((error_rate(MetricKind::Precision, &c).value - 5.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions_give_flat_curves_in_both_modes() {
        let slots: Vec<SlotLabels> = (1..=4)
            .map(|m| SlotLabels {
                start: date(m),
                y_true: vec![Label::Malware, Label::Goodware],
                y_pred: vec![Label::Malware, Label::Goodware],
            })
            .collect();
        for mode in [CurveMode::Point, CurveMode::Cumulative] {
            let curve = decay_curve(&slots, MetricKind::F1, mode).unwrap();
            assert_eq!(curve.values, vec![1.0; 4]);
        }
    }

    #[test]
    fn cumulative_pools_counts_not_values() {
        // slot 1: tp=5 → f1 = 1.0; slot 2: fn=5 → f1 = 0.0.
        // Pooled: tp=5, fn=5 → f1 = 10/15 = 2/3, not the value-average 0.5.
        let slots = vec![
            (date(1), counts(5, 0, 0, 0)),
            (date(2), counts(0, 0, 0, 5)),
        ];
        let curve = decay_curve_from_counts(&slots, MetricKind::F1, CurveMode::Cumulative).unwrap();
        assert_eq!(curve.values[0], 1.0);
        assert!((curve.values[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(curve.counts[1], counts(5, 0, 0, 5));
    }

    #[test]
    fn point_mode_is_local_to_each_slot() {
        let mut slots = vec![
            (date(1), counts(5, 0, 5, 0)),
            (date(2), counts(4, 1, 5, 0)),
            (date(3), counts(1, 1, 1, 1)),
        ];
        let before = decay_curve_from_counts(&slots, MetricKind::F1, CurveMode::Point).unwrap();
        slots[2] = (date(3), counts(0, 9, 0, 9));
        let after = decay_curve_from_counts(&slots, MetricKind::F1, CurveMode::Point).unwrap();
        assert_eq!(before.values[..2], after.values[..2]);
        assert_ne!(before.values[2], after.values[2]);
    }

    #[test]
    fn empty_slot_is_an_error_for_label_curves() {
        let slots = vec![SlotLabels {
            start: date(1),
            y_true: vec![],
            y_pred: vec![],
        }];
        assert!(matches!(
            decay_curve(&slots, MetricKind::F1, CurveMode::Point),
            Err(MetricError::EmptySlot { index: 0 })
        ));
    }

    fn bare_curve(values: Vec<f64>) -> DecayCurve {
        let n = values.len();
        DecayCurve {
            metric: MetricKind::F1,
            mode: CurveMode::Point,
            slot_starts: (0..n).map(|i| date(i as u32 + 1)).collect(),
            degenerate: vec![false; n],
            counts: vec![ConfusionCounts::default(); n],
            values,
        }
    }

    #[test]
    fn aut_of_perfect_two_point_curve_is_one() {
        assert_eq!(aut(&bare_curve(vec![1.0, 1.0]), 2).unwrap(), 1.0);
    }

    #[test]
    fn aut_of_full_decay_is_half() {
        assert_eq!(aut(&bare_curve(vec![1.0, 0.0]), 2).unwrap(), 0.5);
    }

    #[test]
    fn aut_of_a_flat_curve_is_the_constant_bit_for_bit() {
        // 0.37 is not exactly representable; a naive sum-then-divide would
        // come back one ulp off.
        for n in [2usize, 3, 7, 48] {
            assert_eq!(aut(&bare_curve(vec![0.37; n]), n).unwrap(), 0.37);
        }
    }

    #[test]
    fn aut_three_point_example() {
        // (1/2)·((0.8+0.6)/2 + (0.6+0.4)/2) = (0.7 + 0.5)/2 = 0.6
        let value = aut(&bare_curve(vec![0.8, 0.6, 0.4]), 3).unwrap();
        assert!((value - 0.6).abs() < 1e-15);
    }

    #[test]
    fn aut_rejects_single_point_curves_and_length_mismatch() {
        assert!(matches!(
            aut(&bare_curve(vec![0.5]), 1),
            Err(MetricError::ShortCurve { n: 1 })
        ));
        assert!(matches!(
            aut(&bare_curve(vec![0.5, 0.6]), 3),
            Err(MetricError::CurveLengthMismatch { len: 2, n: 3 })
        ));
    }

    #[test]
    fn windowed_aut_step_curve() {
        let curve = bare_curve(vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let windows = aut_windows(&curve, 3).unwrap();
        assert_eq!(windows, vec![(3, 1.0), (6, 0.0)]);
    }

    #[test]
    fn window_equal_to_curve_length_matches_plain_aut() {
        let curve = bare_curve(vec![0.9, 0.7, 0.8, 0.4]);
        let windows = aut_windows(&curve, 4).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].0, 4);
        assert_eq!(windows[0].1, aut(&curve, 4).unwrap());
    }

    #[test]
    fn windowed_aut_pairs() {
        let curve = bare_curve(vec![1.0, 0.0, 0.0, 1.0]);
        let windows = aut_windows(&curve, 2).unwrap();
        assert_eq!(windows, vec![(2, 0.5), (4, 0.5)]);
    }

    #[test]
    fn bad_windows_are_rejected() {
        let curve = bare_curve(vec![1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(aut_windows(&curve, 3), Err(MetricError::BadWindow { .. })));
        assert!(matches!(aut_windows(&curve, 1), Err(MetricError::BadWindow { .. })));
    }

    #[test]
    fn curve_csv_layout() {
        let slots = vec![
            (date(1), counts(5, 0, 5, 0)),
            (date(2), counts(3, 1, 5, 1)),
        ];
        let curve = decay_curve_from_counts(&slots, MetricKind::F1, CurveMode::Point).unwrap();
        let mut buffer = Vec::new();
        curve.write_csv(&mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "slot_index,slot_start,metric,mode,value,tp,fp,tn,fn");
        assert_eq!(lines[1], "1,2014-01-01,f1,point,1,5,0,5,0");
        assert_eq!(lines[2], "2,2014-02-01,f1,point,0.75,3,1,5,1");
    }

    proptest! {
        // AUT of a constant curve equals the constant exactly (up to float
        // association in the sum).
        #[test]
        fn aut_of_constant_curve_is_the_constant(c in 0.0f64..=1.0, n in 2usize..40) {
            let value = aut_values(&vec![c; n]).unwrap();
            prop_assert!((value - c).abs() < 1e-12);
        }

        // Pointwise dominance implies AUT dominance.
        #[test]
        fn aut_is_monotone_under_dominance(
            base in proptest::collection::vec(0.0f64..=1.0, 2..30),
            bumps in proptest::collection::vec(0.0f64..=0.5, 2..30),
        ) {
            let n = base.len().min(bumps.len());
            let lower = &base[..n];
            let upper: Vec<f64> = lower.iter().zip(&bumps[..n]).map(|(v, b)| (v + b).min(1.0)).collect();
            prop_assert!(aut_values(&upper).unwrap() >= aut_values(lower).unwrap() - 1e-12);
        }

        // AUT depends only on the values, not the slot dates.
        #[test]
        fn aut_ignores_time_relabeling(values in proptest::collection::vec(0.0f64..=1.0, 2..20), offset in 1u32..10) {
            let mut a = bare_curve(values.clone());
            let b = bare_curve(values);
            a.slot_starts = a.slot_starts.iter().map(|d| *d + chrono::Days::new(u64::from(offset))).collect();
            prop_assert_eq!(aut(&a, a.len()).unwrap(), aut(&b, b.len()).unwrap());
        }

        // Every window of a constant curve scores the constant.
        #[test]
        fn windows_of_constant_curve_are_constant(c in 0.0f64..=1.0, windows in 1usize..5, tau in 2usize..5) {
            let curve = bare_curve(vec![c; windows * tau]);
            for (_, value) in aut_windows(&curve, tau).unwrap() {
                prop_assert!((value - c).abs() < 1e-12);
            }
        }

        // Cumulative value at k equals the metric over pooled counts 1..k.
        #[test]
        fn cumulative_equals_pooled_recomputation(
            raw in proptest::collection::vec((0u64..20, 0u64..20, 0u64..20, 0u64..20), 1..10)
        ) {
            let slots: Vec<(NaiveDate, ConfusionCounts)> = raw
                .iter()
                .enumerate()
                .map(|(i, &(tp, fp, tn, fne))| (date(i as u32 + 1), counts(tp, fp, tn, fne)))
                .collect();
            let curve = decay_curve_from_counts(&slots, MetricKind::F1, CurveMode::Cumulative).unwrap();
            for k in 0..slots.len() {
                let mut pooled = ConfusionCounts::default();
                for (_, c) in &slots[..=k] {
                    pooled.absorb(c);
                }
                prop_assert_eq!(curve.values[k], f1(&pooled).value);
            }
        }
    }
}

//! Synthetic corpora with controllable drift.
//!
//! Real timestamped malware corpora cannot be redistributed, so experiments
//! and tests run on generated ones: two Gaussian clusters in feature space,
//! spread over a configurable number of time slots, with the malware cluster
//! optionally wandering (mean drift) or swapping semantics outright (label
//! flip) as time passes. Generation is fully determined by the seed.

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, FeatureVector, Label, Sample};

/// How the relationship between features and labels changes over the slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    /// Stationary clusters: the i.i.d. assumption actually holds.
    None,
    /// The malware mean rotates through a quarter arc over the slots while
    /// goodware stays put. Pooled over all time the classes stay separable
    /// (so time-oblivious splits look flattering), but a model trained on
    /// early slots decays on later ones.
    MeanDrift,
    /// From `at_slot` (0-based) onward the clusters swap roles: malware is
    /// drawn where goodware used to live and vice versa. Class counts per
    /// slot are unchanged, so the testing ratio stays realistic, but every
    /// decision of a frozen model inverts; retraining recovers.
    LabelFlip { at_slot: usize },
}

/// Recipe for a synthetic corpus. `Default` gives a 2,000-sample,
/// 12-slot, σ̂ = 0.1 mean-drift corpus starting 2014-01-01.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    /// Total sample count, spread over the slots (remainder to the earliest).
    pub n_samples: usize,
    /// Number of consecutive time slots, each `slot_days` long.
    pub n_slots: usize,
    /// Malware fraction: each slot holds `⌊σ̂ · n_k⌋` malware (at least one,
    /// at most `n_k − 1`), so the realized per-slot ratio never exceeds σ̂.
    pub sigma_hat: f64,
    /// Feature dimension (≥ 2). The first two dimensions carry the class
    /// signal; any further ones are pure noise.
    pub dimension: usize,
    /// Distance between the goodware and malware cluster means. 2.0 is
    /// cleanly separable at spread 0.55; shrink it (or widen `spread`) for
    /// overlapping classes.
    pub separation: f64,
    /// Standard deviation of every feature around its cluster mean.
    pub spread: f64,
    pub drift: DriftKind,
    pub seed: u64,
    /// Date of the first slot's first day.
    pub start: NaiveDate,
    /// Calendar length of each slot.
    pub slot_days: u32,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            n_slots: 12,
            sigma_hat: 0.1,
            dimension: 2,
            separation: 2.0,
            spread: 0.55,
            drift: DriftKind::MeanDrift,
            seed: 0,
            start: NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
            slot_days: 30,
        }
    }
}

/// Errors from fixture generation.
#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("need at least 2 samples per slot; got {n_samples} over {n_slots} slots")]
    TooFewSamples { n_samples: usize, n_slots: usize },
    #[error("slot count must be positive")]
    NoSlots,
    #[error("sigma_hat must lie strictly inside (0, 1); got {0}")]
    BadRatio(f64),
    #[error("dimension must be at least 2; got {0}")]
    BadDimension(usize),
    #[error("{name} must be finite and positive; got {value}")]
    BadScale { name: &'static str, value: f64 },
    #[error("slot_days must be positive")]
    BadSlotDays,
    #[error("label flip at slot {at_slot} lies outside the {n_slots} slots")]
    FlipOutOfRange { at_slot: usize, n_slots: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl FixtureSpec {
    fn validate(&self) -> Result<(), FixtureError> {
        if self.n_slots == 0 {
            return Err(FixtureError::NoSlots);
        }
        if self.n_samples < 2 * self.n_slots {
            return Err(FixtureError::TooFewSamples {
                n_samples: self.n_samples,
                n_slots: self.n_slots,
            });
        }
        if !self.sigma_hat.is_finite() || self.sigma_hat <= 0.0 || self.sigma_hat >= 1.0 {
            return Err(FixtureError::BadRatio(self.sigma_hat));
        }
        if self.dimension < 2 {
            return Err(FixtureError::BadDimension(self.dimension));
        }
        for (name, value) in [("separation", self.separation), ("spread", self.spread)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(FixtureError::BadScale { name, value });
            }
        }
        if self.slot_days == 0 {
            return Err(FixtureError::BadSlotDays);
        }
        if let DriftKind::LabelFlip { at_slot } = self.drift {
            if at_slot >= self.n_slots {
                return Err(FixtureError::FlipOutOfRange {
                    at_slot,
                    n_slots: self.n_slots,
                });
            }
        }
        Ok(())
    }
}

/// Generates the corpus described by `spec`.
///
/// Slot k (0-based) covers `[start + k·slot_days, start + (k+1)·slot_days)`
/// with its samples' timestamps spread evenly over those days. Within a slot
/// the malware positions are spread evenly too, so any date cut through the
/// corpus still sees both classes. Ids run `syn000000, syn000001, …` in
/// generation order. The same spec always yields the identical corpus.
pub fn synthetic_corpus(spec: &FixtureSpec) -> Result<Corpus, FixtureError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.spread).expect("validated spread");

    let base = spec.n_samples / spec.n_slots;
    let remainder = spec.n_samples % spec.n_slots;

    let mut samples = Vec::with_capacity(spec.n_samples);
    let mut serial = 0usize;
    for slot in 0..spec.n_slots {
        let slot_n = base + usize::from(slot < remainder);
        let malware_n = ((spec.sigma_hat * slot_n as f64).floor() as usize).clamp(1, slot_n - 1);
        let slot_start = spec.start + Duration::days(i64::from(spec.slot_days) * slot as i64);
        let malware_mean = malware_mean(spec, slot);

        let flipped = matches!(spec.drift, DriftKind::LabelFlip { at_slot } if slot >= at_slot);
        for position in 0..slot_n {
            // Bresenham-style spreading: position i is malware iff the
            // running quota ⌊(i+1)·m/n⌋ ticks up at i.
            let is_malware =
                (position + 1) * malware_n / slot_n > position * malware_n / slot_n;
            // A flip moves each class to the other class's old location.
            let mean = if is_malware != flipped { malware_mean } else { [0.0, 0.0] };

            let mut pairs = Vec::with_capacity(spec.dimension);
            for dim in 0..spec.dimension {
                let center = mean.get(dim).copied().unwrap_or(0.0);
                pairs.push((dim as u32, center + noise.sample(&mut rng)));
            }

            let label = if is_malware { Label::Malware } else { Label::Goodware };

            let day = (position as i64 * i64::from(spec.slot_days)) / slot_n as i64;
            samples.push(Sample {
                id: format!("syn{serial:06}"),
                timestamp: slot_start + Duration::days(day),
                label,
                features: FeatureVector::from_pairs(pairs)?,
            });
            serial += 1;
        }
    }

    Ok(Corpus::new(samples)?)
}

/// Malware cluster mean for a slot: fixed at `(separation, 0)` without mean
/// drift, otherwise rotated along a quarter circle of radius `separation`
/// from angle 0 (first slot) to π/2 (last slot).
fn malware_mean(spec: &FixtureSpec, slot: usize) -> [f64; 2] {
    let theta = match spec.drift {
        DriftKind::MeanDrift if spec.n_slots > 1 => {
            std::f64::consts::FRAC_PI_2 * slot as f64 / (spec.n_slots - 1) as f64
        }
        _ => 0.0,
    };
    [spec.separation * theta.cos(), spec.separation * theta.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::class_ratio;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
    }

    #[test]
    fn default_spec_generates_requested_shape() {
        let spec = FixtureSpec::default();
        let corpus = synthetic_corpus(&spec).expect("valid spec");
        assert_eq!(corpus.len(), 2000);
        assert_eq!(corpus.dimension(), 2);
        let first = &corpus.samples()[0];
        let last = &corpus.samples()[corpus.len() - 1];
        assert_eq!(first.timestamp, date(2014, 1, 1));
        assert!(last.timestamp < date(2014, 1, 1) + Duration::days(12 * 30));
    }

    #[test]
    fn per_slot_ratio_never_exceeds_sigma_hat() {
        let spec = FixtureSpec {
            n_samples: 5000,
            n_slots: 24,
            ..FixtureSpec::default()
        };
        let corpus = synthetic_corpus(&spec).expect("valid spec");
        for slot in 0..24 {
            let start = spec.start + Duration::days(30 * slot);
            let end = start + Duration::days(30);
            let members: Vec<_> = corpus
                .samples()
                .iter()
                .filter(|s| s.timestamp >= start && s.timestamp < end)
                .collect();
            assert!(!members.is_empty(), "slot {slot} is empty");
            let ratio = class_ratio(members.iter().copied()).expect("two classes");
            assert!(ratio <= spec.sigma_hat + 1e-12, "slot {slot}: {ratio}");
            assert!(ratio > 0.0, "slot {slot} lost its malware");
        }
    }

    #[test]
    fn identical_specs_generate_identical_corpora() {
        let spec = FixtureSpec {
            n_samples: 300,
            n_slots: 6,
            ..FixtureSpec::default()
        };
        let a = synthetic_corpus(&spec).expect("valid spec");
        let b = synthetic_corpus(&spec).expect("valid spec");
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_change_features_but_not_shape() {
        let base = FixtureSpec {
            n_samples: 300,
            n_slots: 6,
            ..FixtureSpec::default()
        };
        let other = FixtureSpec { seed: 1, ..base.clone() };
        let a = synthetic_corpus(&base).expect("valid spec");
        let b = synthetic_corpus(&other).expect("valid spec");
        assert_ne!(a, b);
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.timestamp, y.timestamp);
            assert_eq!(x.label, y.label);
        }
    }

    #[test]
    fn label_flip_swaps_cluster_roles_but_keeps_class_counts() {
        let spec = FixtureSpec {
            n_samples: 600,
            n_slots: 6,
            separation: 4.0,
            spread: 0.2,
            drift: DriftKind::LabelFlip { at_slot: 3 },
            ..FixtureSpec::default()
        };
        let corpus = synthetic_corpus(&spec).expect("valid spec");
        let flip_date = spec.start + Duration::days(30 * 3);
        let mut early = (0usize, 0usize);
        let mut late = (0usize, 0usize);
        for sample in corpus.samples() {
            // With tight clusters the location is legible from the first
            // coordinate: the pre-flip malware region sits at x ≈ 4. After
            // the flip, that region belongs to goodware.
            let in_malware_region = sample.features.dot(&[1.0, 0.0]) > 2.0;
            let expect_malware = in_malware_region != (sample.timestamp >= flip_date);
            assert_eq!(sample.label.is_malware(), expect_malware, "id {}", sample.id);

            let tally = if sample.timestamp < flip_date { &mut early } else { &mut late };
            if sample.label.is_malware() {
                tally.0 += 1;
            } else {
                tally.1 += 1;
            }
        }
        // The flip relocates the classes without changing their sizes.
        assert_eq!(early, (30, 270));
        assert_eq!(late, (30, 270));
    }

    #[test]
    fn extra_dimensions_carry_no_class_signal() {
        let spec = FixtureSpec {
            n_samples: 400,
            n_slots: 4,
            dimension: 5,
            drift: DriftKind::None,
            ..FixtureSpec::default()
        };
        let corpus = synthetic_corpus(&spec).expect("valid spec");
        assert_eq!(corpus.dimension(), 5);
        // Mean of dimension 3 over each class stays near zero.
        for target in [Label::Goodware, Label::Malware] {
            let probe = [0.0, 0.0, 0.0, 1.0, 0.0];
            let (sum, n) = corpus
                .samples()
                .iter()
                .filter(|s| s.label == target)
                .fold((0.0, 0usize), |(sum, n), s| (sum + s.features.dot(&probe), n + 1));
            assert!(n > 0);
            assert!((sum / n as f64).abs() < 0.3, "class {target:?} mean {}", sum / n as f64);
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        let cases = [
            FixtureSpec { n_slots: 0, ..FixtureSpec::default() },
            FixtureSpec { n_samples: 10, n_slots: 6, ..FixtureSpec::default() },
            FixtureSpec { sigma_hat: 0.0, ..FixtureSpec::default() },
            FixtureSpec { sigma_hat: 1.0, ..FixtureSpec::default() },
            FixtureSpec { dimension: 1, ..FixtureSpec::default() },
            FixtureSpec { spread: 0.0, ..FixtureSpec::default() },
            FixtureSpec { slot_days: 0, ..FixtureSpec::default() },
            FixtureSpec {
                drift: DriftKind::LabelFlip { at_slot: 12 },
                ..FixtureSpec::default()
            },
        ];
        for spec in cases {
            assert!(synthetic_corpus(&spec).is_err(), "accepted {spec:?}");
        }
    }
}

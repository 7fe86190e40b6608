//! Class-ratio measurement and adjustment.
//!
//! Three ratios matter when evaluating a malware classifier: the estimated
//! in-the-wild malware fraction σ̂, the training fraction φ, and the testing
//! fraction δ. Testing at a δ far from σ̂ inflates or deflates every
//! precision-based metric, so [`check_c3`] flags it; [`downsample_to_ratio`]
//! and [`sweep_test_ratio`] adjust ratios by removing samples from one class
//! only (never oversampling, never touching the other class).

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, Sample};

/// The class-ratio configuration and measurements of one experiment:
/// σ̂ (estimated in-the-wild malware fraction), φ (training fraction),
/// δ (testing fraction), and the tolerance used by [`check_c3`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub sigma_hat: f64,
    /// Training malware fraction; measured once training data exists.
    pub phi: Option<f64>,
    /// Testing malware fraction; measured once test data exists.
    pub delta: Option<f64>,
    pub tolerance: f64,
}

/// Default tolerance for the δ ≈ σ̂ check: real-world malware fractions
/// wobble a couple of percentage points month to month.
pub const DEFAULT_C3_TOLERANCE: f64 = 0.02;

impl ClassBalance {
    pub fn new(sigma_hat: f64, tolerance: f64) -> Result<Self, SpatialError> {
        check_fraction("sigma_hat", sigma_hat)?;
        if tolerance < 0.0 || !tolerance.is_finite() {
            return Err(SpatialError::BadFraction {
                name: "tolerance",
                value: tolerance,
            });
        }
        Ok(Self {
            sigma_hat,
            phi: None,
            delta: None,
            tolerance,
        })
    }
}

/// Errors from ratio measurement and downsampling.
#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("cannot compute a class ratio over an empty sample list")]
    EmptySampleList,
    #[error("{name} must be a fraction in [0,1]; got {value}")]
    BadFraction { name: &'static str, value: f64 },
    #[error("grayware samples are not supported by binary class-ratio operations")]
    GraywareUnsupported,
    #[error(
        "target ratio {target} is unreachable by removing {reduce:?} \
         (have {malware} malware / {goodware} goodware)"
    )]
    TargetUnreachable {
        target: f64,
        reduce: Label,
        malware: usize,
        goodware: usize,
    },
    #[error("sample {id:?} has no priority score")]
    PriorityMissing { id: String },
    #[error("reduce_class must be goodware or malware")]
    BadReduceClass,
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), SpatialError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SpatialError::BadFraction { name, value })
    }
}

/// Malware fraction of a sample list: (# malware) / (total).
pub fn class_ratio<'a, I>(samples: I) -> Result<f64, SpatialError>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let mut malware = 0usize;
    let mut total = 0usize;
    for sample in samples {
        match sample.label.as_binary() {
            Some(true) => malware += 1,
            Some(false) => {}
            None => return Err(SpatialError::GraywareUnsupported),
        }
        total += 1;
    }
    if total == 0 {
        return Err(SpatialError::EmptySampleList);
    }
    Ok(malware as f64 / total as f64)
}

/// Removes members of `reduce` until the malware fraction lands on `target`
/// as closely as the floor rule allows.
///
/// The kept count of the reduced class is maximal subject to not crossing
/// the target: reducing goodware keeps `⌊m(1−t)/t⌋` goodware (achieved ratio
/// ≥ t), reducing malware keeps `⌊g·t/(1−t)⌋` malware (achieved ratio ≤ t).
/// With `priority` given, the highest-priority members are kept (ties broken
/// by input position); otherwise the kept set is a uniform random choice
/// driven by `seed`. Output preserves input order, and the non-reduced class
/// is passed through untouched.
pub fn downsample_to_ratio<'a>(
    samples: &[&'a Sample],
    target: f64,
    reduce: Label,
    seed: u64,
    priority: Option<&HashMap<String, f64>>,
) -> Result<Vec<&'a Sample>, SpatialError> {
    check_fraction("target", target)?;
    let reduce_is_malware = match reduce {
        Label::Malware => true,
        Label::Goodware => false,
        Label::Grayware => return Err(SpatialError::BadReduceClass),
    };

    let mut malware = 0usize;
    let mut goodware = 0usize;
    for sample in samples {
        match sample.label.as_binary() {
            Some(true) => malware += 1,
            Some(false) => goodware += 1,
            None => return Err(SpatialError::GraywareUnsupported),
        }
    }

    let unreachable = |malware, goodware| SpatialError::TargetUnreachable {
        target,
        reduce,
        malware,
        goodware,
    };

    let keep = if reduce_is_malware {
        if target >= 1.0 {
            if goodware == 0 { malware } else { return Err(unreachable(malware, goodware)) }
        } else {
            // Largest k with k/(k+g) ≤ target, i.e. ⌊g·t/(1−t)⌋. The floor of
            // the float quotient can land one short (or long) of the exact
            // rational boundary, so nudge by direct ratio comparison.
            let mut keep = (goodware as f64 * target / (1.0 - target)).floor() as usize;
            while keep > 0 && (keep as f64) / ((keep + goodware) as f64) > target {
                keep -= 1;
            }
            while ((keep + 1) as f64) / ((keep + 1 + goodware) as f64) <= target {
                keep += 1;
            }
            if keep > malware {
                return Err(unreachable(malware, goodware));
            }
            keep
        }
    } else if target <= 0.0 {
        if malware == 0 { goodware } else { return Err(unreachable(malware, goodware)) }
    } else {
        // Largest k with m/(m+k) ≥ target, i.e. ⌊m(1−t)/t⌋, float-corrected
        // the same way.
        let mut keep = (malware as f64 * (1.0 - target) / target).floor() as usize;
        while keep > 0 && (malware as f64) / ((malware + keep) as f64) < target {
            keep -= 1;
        }
        while (malware as f64) / ((malware + keep + 1) as f64) >= target {
            keep += 1;
        }
        if keep > goodware {
            return Err(unreachable(malware, goodware));
        }
        keep
    };

    let available = if reduce_is_malware { malware } else { goodware };
    if keep == available {
        return Ok(samples.to_vec()); // target already met: identity
    }

    // Positions of the reduced class, then choose which to keep.
    let mut reducible: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label.is_malware() == reduce_is_malware)
        .map(|(i, _)| i)
        .collect();

    match priority {
        Some(scores) => {
            // Keep the highest scores; ties keep the earlier input position.
            let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(reducible.len());
            for &i in &reducible {
                let id = samples[i].id.as_str();
                let score = scores
                    .get(id)
                    .copied()
                    .ok_or_else(|| SpatialError::PriorityMissing { id: id.to_owned() })?;
                keyed.push((score, i));
            }
            keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite priority").then(a.1.cmp(&b.1)));
            reducible = keyed.into_iter().map(|(_, i)| i).collect();
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            reducible.shuffle(&mut rng);
        }
    }

    let mut kept: Vec<bool> = samples
        .iter()
        .map(|s| s.label.is_malware() != reduce_is_malware)
        .collect();
    for &i in reducible.iter().take(keep) {
        kept[i] = true;
    }
    Ok(samples
        .iter()
        .enumerate()
        .filter(|(i, _)| kept[*i])
        .map(|(_, s)| *s)
        .collect())
}

/// Result of the testing-ratio realism check (δ against σ̂).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C3Check {
    pub delta: f64,
    pub sigma_hat: f64,
    pub tolerance: f64,
    /// |δ − σ̂|.
    pub gap: f64,
}

impl C3Check {
    #[must_use]
    pub fn is_ok(&self) -> bool {
        self.gap <= self.tolerance
    }
}

/// Compares the measured testing malware fraction δ against the estimated
/// in-the-wild fraction σ̂: ok iff `|δ − σ̂| ≤ tolerance`.
#[must_use]
pub fn check_c3(delta: f64, sigma_hat: f64, tolerance: f64) -> C3Check {
    C3Check {
        delta,
        sigma_hat,
        tolerance,
        gap: (delta - sigma_hat).abs(),
    }
}

/// Resamples one slot at several testing ratios, holding the malware set
/// fixed and downsampling goodware only.
///
/// All outputs share the identical malware subset; using one seed for every
/// ratio also makes the kept goodware sets nested (higher ratios keep a
/// prefix of the same shuffled order).
pub fn sweep_test_ratio<'a>(
    slot: &[&'a Sample],
    ratios: &[f64],
    seed: u64,
) -> Result<Vec<Vec<&'a Sample>>, SpatialError> {
    let natural = class_ratio(slot.iter().copied())?;
    let mut resampled = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        check_fraction("ratio", ratio)?;
        if ratio < natural {
            return Err(SpatialError::TargetUnreachable {
                target: ratio,
                reduce: Label::Goodware,
                malware: slot.iter().filter(|s| s.label.is_malware()).count(),
                goodware: slot.iter().filter(|s| !s.label.is_malware()).count(),
            });
        }
        resampled.push(downsample_to_ratio(slot, ratio, Label::Goodware, seed, None)?);
    }
    Ok(resampled)
}

//! Timestamped labeled corpora: loading, sanitization, and projection.
//!
//! A [`Corpus`] is an ordered list of [`Sample`]s, each carrying an opaque
//! id, a calendar-date timestamp, a binary class label, and a sparse
//! [`FeatureVector`]. Corpora are immutable after load and always sorted by
//! timestamp ascending, which is what the time-aware splitting in
//! [`crate::temporal`] relies on.
//!
//! Two input formats are supported (see [`CorpusFormat`]), and every input
//! record is accounted for in a [`SanitizationReport`]: it is either accepted
//! or rejected with a reason (bad timestamp, malformed, grayware).

mod formats;

pub use formats::write_jsonl;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Class label of a sample.
///
/// `Grayware` only occurs when [`LoadOptions::keep_grayware`] is set; every
/// built-in learner and metric requires binary labels and reports an error
/// when it encounters a grayware sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Goodware,
    Malware,
    Grayware,
}

impl Label {
    /// `Some(true)` for malware, `Some(false)` for goodware, `None` for grayware.
    #[must_use]
    pub fn as_binary(self) -> Option<bool> {
        match self {
            Label::Malware => Some(true),
            Label::Goodware => Some(false),
            Label::Grayware => None,
        }
    }

    #[must_use]
    pub fn is_malware(self) -> bool {
        self == Label::Malware
    }
}

/// Maps a detection count (number of engines flagging a sample) to a label:
/// `0` is goodware, `4` or more is malware, anything in between is grayware.
#[must_use]
pub fn label_from_detections(detections: u32) -> Label {
    match detections {
        0 => Label::Goodware,
        1..=3 => Label::Grayware,
        _ => Label::Malware,
    }
}

/// Sparse feature vector: pairs of `(index, value)` with strictly increasing
/// indices, no stored zeros, and finite values only.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    /// Builds a vector from arbitrary `(index, value)` pairs: sorts by index,
    /// drops explicit zeros, and rejects duplicate indices and non-finite
    /// values.
    pub fn from_pairs(pairs: Vec<(u32, f64)>) -> Result<Self, CorpusError> {
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (index, value) in pairs {
            if !value.is_finite() {
                return Err(CorpusError::NonFiniteFeature { index });
            }
            if value != 0.0 {
                entries.push((index, value));
            }
        }
        entries.sort_by_key(|&(index, _)| index);
        for window in entries.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(CorpusError::DuplicateFeatureIndex { index: window[0].0 });
            }
        }
        Ok(Self { entries })
    }

    /// Number of stored (nonzero) entries.
    #[must_use]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest stored feature index, if any entry exists.
    #[must_use]
    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|&(index, _)| index)
    }

    /// Iterates over `(index, value)` pairs in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }

    /// Dot product against a dense weight slice. Indices beyond the slice
    /// contribute nothing; callers validate dimensions where it matters.
    #[must_use]
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .filter_map(|&(index, value)| dense.get(index as usize).map(|w| w * value))
            .sum()
    }
}

/// One timestamped, labeled observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub timestamp: NaiveDate,
    pub label: Label,
    pub features: FeatureVector,
}

/// An immutable, timestamp-sorted collection of samples with a declared
/// feature dimension (max index + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    samples: Vec<Sample>,
    dimension: usize,
}

impl Corpus {
    /// Builds a corpus from samples: stable-sorts by timestamp (ties keep
    /// input order), verifies id uniqueness, and derives the dimension.
    pub fn new(mut samples: Vec<Sample>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<&str, ()> = HashMap::with_capacity(samples.len());
        for sample in &samples {
            if seen.insert(sample.id.as_str(), ()).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: sample.id.clone(),
                });
            }
        }
        drop(seen);
        samples.sort_by_key(|s| s.timestamp);
        let dimension = samples
            .iter()
            .filter_map(|s| s.features.max_index())
            .max()
            .map_or(0, |max| max as usize + 1);
        Ok(Self { samples, dimension })
    }

    #[must_use]
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of feature columns (largest feature index + 1).
    #[must_use]
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Builds an id → position index for O(1) sample lookup.
    #[must_use]
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.samples
            .iter()
            .enumerate()
            .map(|(position, sample)| (sample.id.as_str(), position))
            .collect()
    }
}

/// Accounting for one load: every input record lands in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizationReport {
    pub accepted: usize,
    pub rejected_bad_timestamp: usize,
    pub rejected_malformed: usize,
    pub rejected_grayware: usize,
}

impl SanitizationReport {
    /// Total number of input records seen.
    #[must_use]
    pub fn total(&self) -> usize {
        self.accepted
            + self.rejected_bad_timestamp
            + self.rejected_malformed
            + self.rejected_grayware
    }

    #[must_use]
    pub fn rejected(&self) -> usize {
        self.total() - self.accepted
    }
}

/// On-disk corpus formats accepted by [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// One JSON object per line: `id` (string), `ts` (ISO-8601 date),
    /// `label` (`"mw"`, `"gw"`, or an integer detection count), `features`
    /// (object mapping index to value, or array of indices meaning 1.0).
    Jsonl,
    /// `<label> <idx>:<val> ... # ts=<ISO date> id=<string>` with label 0 or
    /// 1; the trailing comment with `ts=` and `id=` is mandatory.
    SvmlightTs,
}

/// Load-time policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Inclusive range of acceptable timestamps; anything outside is
    /// rejected as a bad timestamp.
    pub valid_range: (NaiveDate, NaiveDate),
    /// When set, the first rejected record aborts the load with an error
    /// instead of being counted and skipped.
    pub strict: bool,
    /// When set, grayware samples are kept with [`Label::Grayware`] instead
    /// of being rejected. Built-in learners and metrics do not accept them.
    pub keep_grayware: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            valid_range: (
                NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date"),
                NaiveDate::from_ymd_opt(2099, 12, 31).expect("valid date"),
            ),
            strict: false,
            keep_grayware: false,
        }
    }
}

/// Errors from corpus loading and projection.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus input: {0}")]
    Io(#[from] std::io::Error),
    #[error("no samples accepted ({rejected} records rejected)")]
    EmptyCorpus { rejected: usize },
    #[error("record {line} rejected in strict mode: {reason}")]
    StrictReject { line: usize, reason: String },
    #[error("duplicate sample id {id:?}")]
    DuplicateId { id: String },
    #[error("duplicate feature index {index} within one vector")]
    DuplicateFeatureIndex { index: u32 },
    #[error("non-finite value at feature index {index}")]
    NonFiniteFeature { index: u32 },
    #[error("top-k selection needs 1 <= k <= dimension; got k={k} with dimension {dimension}")]
    BadTopK { k: usize, dimension: usize },
    #[error("weight vector length {got} does not match corpus dimension {dimension}")]
    WeightsLength { got: usize, dimension: usize },
    #[error("grayware labels cannot be serialized to this format")]
    GraywareUnsupported,
}

/// Reads a corpus file, sanitizing record by record.
///
/// Returns the accepted samples (timestamp-sorted) together with a
/// [`SanitizationReport`] that accounts for every input record. Rejections
/// are not fatal unless [`LoadOptions::strict`] is set, but accepting zero
/// samples is.
pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    options: &LoadOptions,
) -> Result<(Corpus, SanitizationReport), CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    parse_corpus(reader, format, options)
}

/// Same as [`load_corpus`] but reading from any buffered source.
pub fn parse_corpus(
    reader: impl BufRead,
    format: CorpusFormat,
    options: &LoadOptions,
) -> Result<(Corpus, SanitizationReport), CorpusError> {
    let mut report = SanitizationReport::default();
    let mut samples: Vec<Sample> = Vec::new();
    let mut seen_ids: HashMap<String, ()> = HashMap::new();

    for (line_number, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue; // blank lines are not records
        }
        let record_number = line_number + 1;
        let parsed = match format {
            CorpusFormat::Jsonl => formats::parse_jsonl_record(trimmed),
            CorpusFormat::SvmlightTs => formats::parse_svmlight_record(trimmed),
        };
        let record = match parsed {
            Ok(record) => record,
            Err(reason) => {
                reject(&mut report, &reason, record_number, options)?;
                continue;
            }
        };
        if record.timestamp < options.valid_range.0 || record.timestamp > options.valid_range.1 {
            let reason = RejectReason::BadTimestamp(format!(
                "timestamp {} outside valid range [{}, {}]",
                record.timestamp, options.valid_range.0, options.valid_range.1
            ));
            reject(&mut report, &reason, record_number, options)?;
            continue;
        }
        if record.label == Label::Grayware && !options.keep_grayware {
            let reason = RejectReason::Grayware;
            reject(&mut report, &reason, record_number, options)?;
            continue;
        }
        if seen_ids.insert(record.id.clone(), ()).is_some() {
            let reason = RejectReason::Malformed(format!("duplicate id {:?}", record.id));
            reject(&mut report, &reason, record_number, options)?;
            continue;
        }
        report.accepted += 1;
        samples.push(Sample {
            id: record.id,
            timestamp: record.timestamp,
            label: record.label,
            features: record.features,
        });
    }

    if samples.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            rejected: report.rejected(),
        });
    }
    let corpus = Corpus::new(samples)?;
    Ok((corpus, report))
}

/// Projects a corpus onto the `k` features with the largest absolute weight.
///
/// Ties on |w| keep the smaller original index. The retained indices are
/// re-numbered densely in increasing original-index order; the returned map
/// gives, for each new index, the original index it came from.
pub fn feature_select_top_k(
    corpus: &Corpus,
    weights: &[f64],
    k: usize,
) -> Result<(Corpus, Vec<u32>), CorpusError> {
    let dimension = corpus.dimension();
    if weights.len() != dimension {
        return Err(CorpusError::WeightsLength {
            got: weights.len(),
            dimension,
        });
    }
    if k == 0 || k > dimension {
        return Err(CorpusError::BadTopK { k, dimension });
    }

    let mut order: Vec<u32> = (0..dimension as u32).collect();
    // Sort by |w| descending, breaking ties toward the smaller index; the
    // sort is on a (key, index) pair so the result is total and deterministic.
    order.sort_by(|&a, &b| {
        let (wa, wb) = (weights[a as usize].abs(), weights[b as usize].abs());
        wb.partial_cmp(&wa)
            .expect("weights are finite")
            .then(a.cmp(&b))
    });
    let mut retained: Vec<u32> = order[..k].to_vec();
    retained.sort_unstable();

    let mut new_index: HashMap<u32, u32> = HashMap::with_capacity(k);
    for (new, &old) in retained.iter().enumerate() {
        new_index.insert(old, new as u32);
    }

    let mut projected = Vec::with_capacity(corpus.len());
    for sample in corpus.samples() {
        let pairs: Vec<(u32, f64)> = sample
            .features
            .iter()
            .filter_map(|(index, value)| new_index.get(&index).map(|&new| (new, value)))
            .collect();
        projected.push(Sample {
            id: sample.id.clone(),
            timestamp: sample.timestamp,
            label: sample.label,
            features: FeatureVector::from_pairs(pairs)?,
        });
    }
    let corpus = Corpus {
        samples: projected,
        dimension: k,
    };
    Ok((corpus, retained))
}

pub(crate) struct RawRecord {
    pub id: String,
    pub timestamp: NaiveDate,
    pub label: Label,
    pub features: FeatureVector,
}

pub(crate) enum RejectReason {
    BadTimestamp(String),
    Malformed(String),
    Grayware,
}

impl RejectReason {
    fn describe(&self) -> String {
        match self {
            RejectReason::BadTimestamp(detail) => detail.clone(),
            RejectReason::Malformed(detail) => detail.clone(),
            RejectReason::Grayware => "grayware label excluded".to_owned(),
        }
    }
}

fn reject(
    report: &mut SanitizationReport,
    reason: &RejectReason,
    line: usize,
    options: &LoadOptions,
) -> Result<(), CorpusError> {
    if options.strict {
        return Err(CorpusError::StrictReject {
            line,
            reason: reason.describe(),
        });
    }
    match reason {
        RejectReason::BadTimestamp(_) => report.rejected_bad_timestamp += 1,
        RejectReason::Malformed(_) => report.rejected_malformed += 1,
        RejectReason::Grayware => report.rejected_grayware += 1,
    }
    Ok(())
}

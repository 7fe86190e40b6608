//! Record-level parsers and writers for the supported corpus formats.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::Deserialize;

use super::{Corpus, CorpusError, FeatureVector, Label, RawRecord, RejectReason};

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    ts: String,
    label: JsonLabel,
    features: JsonFeatures,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonLabel {
    Tag(String),
    Detections(u32),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonFeatures {
    Map(BTreeMap<String, f64>),
    Indices(Vec<u32>),
}

pub(super) fn parse_jsonl_record(line: &str) -> Result<RawRecord, RejectReason> {
    let record: JsonlRecord = serde_json::from_str(line)
        .map_err(|e| RejectReason::Malformed(format!("invalid jsonl record: {e}")))?;
    let timestamp = parse_date(&record.ts)?;
    let label = match record.label {
        JsonLabel::Tag(tag) => match tag.as_str() {
            "mw" => Label::Malware,
            "gw" => Label::Goodware,
            other => {
                return Err(RejectReason::Malformed(format!(
                    "unknown label tag {other:?} (expected \"mw\", \"gw\", or a detection count)"
                )))
            }
        },
        JsonLabel::Detections(count) => super::label_from_detections(count),
    };
    let pairs: Vec<(u32, f64)> = match record.features {
        JsonFeatures::Map(map) => {
            let mut pairs = Vec::with_capacity(map.len());
            for (key, value) in map {
                let index: u32 = key.parse().map_err(|_| {
                    RejectReason::Malformed(format!("feature index {key:?} is not a non-negative integer"))
                })?;
                pairs.push((index, value));
            }
            pairs
        }
        JsonFeatures::Indices(indices) => indices.into_iter().map(|i| (i, 1.0)).collect(),
    };
    let features = FeatureVector::from_pairs(pairs)
        .map_err(|e| RejectReason::Malformed(format!("invalid features: {e}")))?;
    Ok(RawRecord {
        id: record.id,
        timestamp,
        label,
        features,
    })
}

pub(super) fn parse_svmlight_record(line: &str) -> Result<RawRecord, RejectReason> {
    let (data, comment) = line.split_once('#').ok_or_else(|| {
        RejectReason::Malformed("missing mandatory `# ts=... id=...` comment".to_owned())
    })?;

    let mut timestamp: Option<NaiveDate> = None;
    let mut id: Option<String> = None;
    for token in comment.split_whitespace() {
        if let Some(value) = token.strip_prefix("ts=") {
            timestamp = Some(parse_date(value)?);
        } else if let Some(value) = token.strip_prefix("id=") {
            id = Some(value.to_owned());
        }
    }
    let timestamp = timestamp
        .ok_or_else(|| RejectReason::Malformed("comment lacks ts=<date>".to_owned()))?;
    let id = id.ok_or_else(|| RejectReason::Malformed("comment lacks id=<string>".to_owned()))?;

    let mut tokens = data.split_whitespace();
    let label = match tokens.next() {
        Some("1") => Label::Malware,
        Some("0") => Label::Goodware,
        Some(other) => {
            return Err(RejectReason::Malformed(format!(
                "label must be 0 or 1, got {other:?}"
            )))
        }
        None => return Err(RejectReason::Malformed("empty record".to_owned())),
    };

    let mut pairs = Vec::new();
    for token in tokens {
        let (index, value) = token.split_once(':').ok_or_else(|| {
            RejectReason::Malformed(format!("feature token {token:?} is not idx:val"))
        })?;
        let index: u32 = index.parse().map_err(|_| {
            RejectReason::Malformed(format!("feature index {index:?} is not a non-negative integer"))
        })?;
        let value: f64 = value
            .parse()
            .map_err(|_| RejectReason::Malformed(format!("feature value {value:?} is not numeric")))?;
        pairs.push((index, value));
    }
    let features = FeatureVector::from_pairs(pairs)
        .map_err(|e| RejectReason::Malformed(format!("invalid features: {e}")))?;
    Ok(RawRecord {
        id,
        timestamp,
        label,
        features,
    })
}

fn parse_date(text: &str) -> Result<NaiveDate, RejectReason> {
    text.parse::<NaiveDate>()
        .map_err(|_| RejectReason::BadTimestamp(format!("unparseable ISO date {text:?}")))
}

/// Writes a corpus in the jsonl format, one record per line, preserving
/// sample order. Reloading the output reproduces the same corpus.
pub fn write_jsonl(corpus: &Corpus, mut writer: impl Write) -> Result<(), CorpusError> {
    for sample in corpus.samples() {
        let tag = match sample.label {
            Label::Malware => "mw",
            Label::Goodware => "gw",
            Label::Grayware => return Err(CorpusError::GraywareUnsupported),
        };
        let mut features = serde_json::Map::new();
        for (index, value) in sample.features.iter() {
            features.insert(
                index.to_string(),
                serde_json::Number::from_f64(value)
                    .map(serde_json::Value::Number)
                    .ok_or(CorpusError::NonFiniteFeature { index })?,
            );
        }
        let record = serde_json::json!({
            "id": sample.id,
            "ts": sample.timestamp.to_string(),
            "label": tag,
            "features": features,
        });
        writeln!(writer, "{record}")?;
    }
    Ok(())
}

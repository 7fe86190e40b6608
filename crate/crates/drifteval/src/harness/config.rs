//! Experiment configuration: one JSON document describes a complete,
//! reproducible evaluation — corpus, split geometry, class-balance targets,
//! learner, optional ratio tuning, and the strategies to run.

use std::env;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusFormat;
use crate::learners::{LearnerKind, LearnerSpec};
use crate::spatial::DEFAULT_C3_TOLERANCE;
use crate::temporal::SplitSpec;
use crate::tuning::TuningConfig;

use super::HarnessError;

/// Where the samples come from and how to read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
    /// Keep grayware-labeled records instead of dropping them. The built-in
    /// learners reject grayware, so this only makes sense for ingestion.
    #[serde(default)]
    pub keep_grayware: bool,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::Jsonl
}

/// Class-ratio targets: the in-the-wild estimate σ̂ the test side is held
/// to, plus optional forced ratios for training and testing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    /// Estimated in-the-wild malware fraction.
    pub sigma_hat: f64,
    /// Allowed |δ − σ̂| before the testing ratio counts as unrealistic.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Malware ratio to force on every test slot by downsampling the
    /// over-represented class. Leave unset to test at the natural ratio.
    /// Setting this far from σ̂ deliberately produces a biased run.
    #[serde(default)]
    pub test_ratio: Option<f64>,
    /// Training malware ratio to force when no tuner runs (the tuner's φ*
    /// takes precedence). Leave unset to train at the natural ratio.
    #[serde(default)]
    pub train_ratio: Option<f64>,
}

fn default_tolerance() -> f64 {
    DEFAULT_C3_TOLERANCE
}

/// One strategy to run. Thresholds of the rejection strategy may be left
/// unset to have them calibrated from the training data, bounded by
/// `max_rejection_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum StrategyConfig {
    NoUpdate,
    IncrementalRetrain,
    ActiveLearning {
        budget: f64,
    },
    Rejection {
        #[serde(default)]
        goodware_threshold: Option<f64>,
        #[serde(default)]
        malware_threshold: Option<f64>,
        #[serde(default = "default_calibration_fraction")]
        calibration_fraction: f64,
        /// Rejection-rate cap used when calibrating missing thresholds.
        #[serde(default = "default_max_rejection_rate")]
        max_rejection_rate: f64,
    },
}

fn default_calibration_fraction() -> f64 {
    1.0 / 3.0
}

fn default_max_rejection_rate() -> f64 {
    0.15
}

impl StrategyConfig {
    /// Short name used in output file names.
    #[must_use]
    pub fn name(&self) -> &'static str {
        match self {
            StrategyConfig::NoUpdate => "no_update",
            StrategyConfig::IncrementalRetrain => "incremental_retrain",
            StrategyConfig::ActiveLearning { .. } => "active_learning",
            StrategyConfig::Rejection { .. } => "rejection",
        }
    }

    fn validate(&self, index: usize) -> Result<(), HarnessError> {
        let reject = |message: String| Err(HarnessError::Config(format!("runs[{index}]: {message}")));
        match *self {
            StrategyConfig::NoUpdate | StrategyConfig::IncrementalRetrain => Ok(()),
            StrategyConfig::ActiveLearning { budget } => {
                if budget.is_finite() && (0.0..=1.0).contains(&budget) {
                    Ok(())
                } else {
                    reject(format!("budget must lie in [0, 1]; got {budget}"))
                }
            }
            StrategyConfig::Rejection {
                goodware_threshold,
                malware_threshold,
                calibration_fraction,
                max_rejection_rate,
            } => {
                if goodware_threshold.is_some() != malware_threshold.is_some() {
                    return reject(
                        "set both rejection thresholds or neither (neither = calibrate)".to_owned(),
                    );
                }
                for (name, value) in [
                    ("goodware_threshold", goodware_threshold.unwrap_or(0.0)),
                    ("malware_threshold", malware_threshold.unwrap_or(0.0)),
                    ("max_rejection_rate", max_rejection_rate),
                ] {
                    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                        return reject(format!("{name} must lie in [0, 1]; got {value}"));
                    }
                }
                if !calibration_fraction.is_finite() || !(0.0 < calibration_fraction && calibration_fraction < 1.0) {
                    return reject(format!(
                        "calibration_fraction must lie strictly inside (0, 1); got {calibration_fraction}"
                    ));
                }
                Ok(())
            }
        }
    }
}

/// A complete experiment. The JSON schema is this struct verbatim: see the
/// README for an annotated example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub split: SplitSpec,
    pub balance: BalanceConfig,
    pub learner: LearnerSpec,
    /// When present, the training malware ratio is tuned before the runs
    /// and the tuned φ* is applied to the full training window.
    #[serde(default)]
    pub tuning: Option<TuningConfig>,
    pub runs: Vec<StrategyConfig>,
    /// Seed for every sampling decision the experiment itself makes
    /// (downsampling, tuning). The learner's own seed lives in `learner`.
    #[serde(default)]
    pub seed: u64,
    /// Fail (exit 3) instead of proceeding when C1/C2/C3 are violated.
    #[serde(default = "default_strict")]
    pub strict: bool,
    pub out_dir: PathBuf,
    /// Optional window length τ for windowed area-under-time summaries;
    /// must be ≥ 2 and divide the slot count.
    #[serde(default)]
    pub aut_window: Option<usize>,
}

fn default_strict() -> bool {
    true
}

impl ExperimentConfig {
    /// Checks everything that can be checked without touching the corpus:
    /// referenced files exist, fractions are in range, the split geometry is
    /// sound, and each run entry is well-formed.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !self.corpus.path.exists() {
            return Err(HarnessError::Config(format!(
                "corpus path {} does not exist",
                self.corpus.path.display()
            )));
        }
        if let LearnerKind::External(params) = &self.learner.kind {
            if !params.predictions.exists() {
                return Err(HarnessError::Config(format!(
                    "external predictions file {} does not exist",
                    params.predictions.display()
                )));
            }
        }
        self.split
            .validate()
            .map_err(|e| HarnessError::Config(format!("split: {e}")))?;
        for (name, value) in [
            ("balance.sigma_hat", Some(self.balance.sigma_hat)),
            ("balance.test_ratio", self.balance.test_ratio),
            ("balance.train_ratio", self.balance.train_ratio),
        ] {
            if let Some(value) = value {
                if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                    return Err(HarnessError::Config(format!(
                        "{name} must lie in [0, 1]; got {value}"
                    )));
                }
            }
        }
        if !self.balance.tolerance.is_finite() || self.balance.tolerance < 0.0 {
            return Err(HarnessError::Config(format!(
                "balance.tolerance must be non-negative; got {}",
                self.balance.tolerance
            )));
        }
        if let Some(tuning) = &self.tuning {
            tuning
                .validate()
                .map_err(|e| HarnessError::Config(format!("tuning: {e}")))?;
        }
        for (index, run) in self.runs.iter().enumerate() {
            run.validate(index)?;
        }
        if let Some(tau) = self.aut_window {
            if tau < 2 {
                return Err(HarnessError::Config(format!(
                    "aut_window must be at least 2; got {tau}"
                )));
            }
        }
        Ok(())
    }
}

/// Reads a JSON experiment config. Relative corpus / predictions paths are
/// resolved against the config file's directory, then the config is
/// validated.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    if let Some(base) = path.parent() {
        resolve_paths(&mut config, base);
    }
    config.validate()?;
    Ok(config)
}

fn resolve_paths(config: &mut ExperimentConfig, base: &Path) {
    let anchor = |path: &mut PathBuf| {
        if path.is_relative() {
            *path = base.join(&path);
        }
    };
    anchor(&mut config.corpus.path);
    anchor(&mut config.out_dir);
    if let LearnerKind::External(params) = &mut config.learner.kind {
        anchor(&mut params.predictions);
    }
}

/// Applies the supported environment overrides: `DRIFTEVAL_SEED` (u64),
/// `DRIFTEVAL_CORPUS` (path), and `DRIFTEVAL_OUT` (directory). Nothing else
/// is overridable from the environment by design.
pub fn apply_env_overrides(config: &mut ExperimentConfig) -> Result<(), HarnessError> {
    if let Ok(seed) = env::var("DRIFTEVAL_SEED") {
        config.seed = seed.parse().map_err(|_| {
            HarnessError::Config(format!("DRIFTEVAL_SEED must be an unsigned integer; got {seed:?}"))
        })?;
    }
    if let Ok(path) = env::var("DRIFTEVAL_CORPUS") {
        config.corpus.path = PathBuf::from(path);
    }
    if let Ok(path) = env::var("DRIFTEVAL_OUT") {
        config.out_dir = PathBuf::from(path);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::Span;
    use chrono::NaiveDate;
    use std::io::Write as _;

    fn scratch_config(dir: &Path) -> ExperimentConfig {
        let corpus = dir.join("corpus.jsonl");
        std::fs::write(&corpus, "").expect("writable scratch dir");
        ExperimentConfig {
            corpus: CorpusConfig {
                path: corpus,
                format: CorpusFormat::Jsonl,
                keep_grayware: false,
            },
            split: SplitSpec {
                train_start: NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
                train: Span::Days(60),
                test: Span::Days(120),
                slot: Span::Days(30),
                mode: Default::default(),
                empty_slots: Default::default(),
                min_slot_samples: 1,
            },
            balance: BalanceConfig {
                sigma_hat: 0.1,
                tolerance: DEFAULT_C3_TOLERANCE,
                test_ratio: None,
                train_ratio: None,
            },
            learner: LearnerSpec::linear_svm(7),
            tuning: None,
            runs: vec![StrategyConfig::NoUpdate],
            seed: 7,
            strict: true,
            out_dir: dir.join("out"),
            aut_window: None,
        }
    }

    #[test]
    fn minimal_json_fills_defaults() {
        let dir = tempfile::tempdir().expect("tempdir");
        std::fs::write(dir.path().join("corpus.jsonl"), "").expect("scratch file");
        let json = r#"{
            "corpus": {"path": "corpus.jsonl"},
            "split": {
                "train_start": "2014-01-01",
                "train": {"days": 60},
                "test": {"days": 120},
                "slot": {"days": 30}
            },
            "balance": {"sigma_hat": 0.1},
            "learner": {"kind": "linear_svm"},
            "runs": [{"strategy": "no_update"}],
            "out_dir": "out"
        }"#;
        let path = dir.path().join("config.json");
        let mut file = std::fs::File::create(&path).expect("config file");
        file.write_all(json.as_bytes()).expect("write config");

        let config = load_config(&path).expect("valid config");
        assert!(config.strict);
        assert_eq!(config.seed, 0);
        assert_eq!(config.balance.tolerance, DEFAULT_C3_TOLERANCE);
        assert_eq!(config.corpus.format, CorpusFormat::Jsonl);
        // Relative paths were anchored to the config's directory.
        assert_eq!(config.corpus.path, dir.path().join("corpus.jsonl"));
        assert_eq!(config.out_dir, dir.path().join("out"));
    }

    #[test]
    fn missing_corpus_path_is_a_config_error() {
        let dir = tempfile::tempdir().expect("tempdir");
        let mut config = scratch_config(dir.path());
        config.corpus.path = dir.path().join("nowhere.jsonl");
        let error = config.validate().expect_err("must reject");
        assert!(matches!(error, HarnessError::Config(_)), "{error}");
    }

    #[test]
    fn lone_rejection_threshold_is_rejected() {
        let dir = tempfile::tempdir().expect("tempdir");
        let mut config = scratch_config(dir.path());
        config.runs = vec![StrategyConfig::Rejection {
            goodware_threshold: Some(0.2),
            malware_threshold: None,
            calibration_fraction: 1.0 / 3.0,
            max_rejection_rate: 0.15,
        }];
        assert!(config.validate().is_err());
    }

    #[test]
    fn bad_budget_is_rejected_but_an_empty_run_list_is_not() {
        let dir = tempfile::tempdir().expect("tempdir");
        let mut config = scratch_config(dir.path());
        config.runs = vec![StrategyConfig::ActiveLearning { budget: 1.5 }];
        assert!(config.validate().is_err());
        // Tuning-only configs carry no runs; executing them is what fails.
        config.runs = Vec::new();
        assert!(config.validate().is_ok());
    }

    #[test]
    fn env_overrides_cover_seed_and_paths_only() {
        let dir = tempfile::tempdir().expect("tempdir");
        let mut config = scratch_config(dir.path());
        // Env mutation is process-global: set, apply, then clean up.
        env::set_var("DRIFTEVAL_SEED", "99");
        env::set_var("DRIFTEVAL_CORPUS", "/tmp/elsewhere.jsonl");
        env::set_var("DRIFTEVAL_OUT", "/tmp/elsewhere-out");
        let result = apply_env_overrides(&mut config);
        env::remove_var("DRIFTEVAL_SEED");
        env::remove_var("DRIFTEVAL_CORPUS");
        env::remove_var("DRIFTEVAL_OUT");
        result.expect("valid overrides");
        assert_eq!(config.seed, 99);
        assert_eq!(config.corpus.path, PathBuf::from("/tmp/elsewhere.jsonl"));
        assert_eq!(config.out_dir, PathBuf::from("/tmp/elsewhere-out"));
    }

    #[test]
    fn config_round_trips_through_json() {
        let dir = tempfile::tempdir().expect("tempdir");
        let config = scratch_config(dir.path());
        let json = serde_json::to_string_pretty(&config).expect("serializable");
        let back: ExperimentConfig = serde_json::from_str(&json).expect("parseable");
        assert_eq!(config, back);
    }
}

//! Report types emitted by experiments: the per-experiment `RunReport`
//! (JSON), the cross-report comparison table (CSV), and the four-setting
//! bias table (CSV).

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::SanitizationReport;
use crate::spatial::{C3Check, ClassBalance};
use crate::strategies::StrategyId;
use crate::temporal::{C1Check, C2Report};
use crate::tuning::TuningResult;

use super::config::ExperimentConfig;
use super::HarnessError;

/// Outcomes of the three validity checks. Every report carries this section,
/// violated or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Training strictly precedes testing.
    pub c1: C1Check,
    /// Every test object sits in its slot's window, and the training
    /// classes are not drawn from disjoint time ranges.
    pub c2: C2Report,
    /// The testing malware fraction δ stays within tolerance of σ̂.
    pub c3: C3Check,
}

impl ConstraintReport {
    /// Names of the violated constraints, in order.
    #[must_use]
    pub fn violations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.c1.is_ok() {
            out.push("C1");
        }
        if !self.c2.is_ok() {
            out.push("C2");
        }
        if !self.c3.is_ok() {
            out.push("C3");
        }
        out
    }

    #[must_use]
    pub fn all_ok(&self) -> bool {
        self.violations().is_empty()
    }
}

/// Names of the CSV artifacts one strategy run produced, relative to the
/// output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFiles {
    pub point_curve: String,
    pub cumulative_curve: String,
    pub slots: String,
}

/// Area under time of one τ-length window of the point curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowedAut {
    /// 1-based index of the window's last slot.
    pub end_slot: usize,
    pub value: f64,
}

/// Summary of one strategy run: the resolved strategy (thresholds filled
/// in), curve values, area-under-time figures, and costs. Full per-slot
/// detail lives in the CSV files named by `files`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub strategy: StrategyId,
    pub files: RunFiles,
    pub slot_starts: Vec<NaiveDate>,
    /// Per-slot F1 over kept samples.
    pub point_values: Vec<f64>,
    /// F1 over pooled kept-sample counts of slots 1..k.
    pub cumulative_values: Vec<f64>,
    pub aut_point: Option<f64>,
    pub aut_cumulative: Option<f64>,
    /// Windowed areas of the point curve; present when the config set a
    /// window length.
    pub windowed_aut: Option<Vec<WindowedAut>>,
    /// Count of test objects whose true labels the strategy consumed.
    pub labeling_cost: u64,
    /// Count of test objects quarantined instead of classified.
    pub quarantine_cost: u64,
}

/// Ratio-tuning outcome plus the trace file it was written to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub result: TuningResult,
    pub trace_file: String,
}

/// Wall-clock accounting. Timings vary run to run; everything else in a
/// report is reproducible from the embedded config.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: u64,
    pub tuning_ms: Option<u64>,
    pub per_run_ms: Vec<u64>,
}

/// Everything one experiment produced. Serialized as `report.json`; the
/// embedded config (with the seed) suffices to reproduce every CSV byte for
/// byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub sanitization: SanitizationReport,
    /// σ̂ with the measured training fraction φ and testing fraction δ.
    pub balance: ClassBalance,
    pub constraints: ConstraintReport,
    /// Violated constraint names (`"C3"`, `"C1, C3"`, …) when the run is
    /// biased; `null` for a clean run. In strict mode a biased report
    /// carries no performance numbers.
    pub biased: Option<String>,
    pub warnings: Vec<String>,
    pub tuning: Option<TuningOutcome>,
    pub runs: Vec<RunOutcome>,
    pub timings: Timings,
}

impl RunReport {
    /// Serializes the report as pretty-printed JSON.
    pub fn write_json(&self, mut writer: impl Write) -> Result<(), HarnessError> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writeln!(writer)?;
        Ok(())
    }

    /// Reads a report back from a `report.json` file.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

/// Human-readable strategy label including parameters, used in comparison
/// tables where several parameterizations of one strategy may appear.
#[must_use]
pub fn strategy_label(id: &StrategyId) -> String {
    match id {
        StrategyId::NoUpdate | StrategyId::IncrementalRetrain => id.name().to_owned(),
        StrategyId::ActiveLearning { budget } => format!("active_learning(budget={budget})"),
        StrategyId::Rejection {
            goodware_threshold,
            malware_threshold,
            ..
        } => format!("rejection(gw={goodware_threshold:.4},mw={malware_threshold:.4})"),
    }
}

/// One row of the performance-cost comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    /// Area under the full point F1 curve.
    pub aut_full: f64,
    /// Area under the first half of the curve (the earliest ⌈N/2⌉ slots,
    /// never fewer than two) — how the strategy does before decay compounds.
    pub aut_half: f64,
    pub labeling_cost: u64,
    pub quarantine_cost: u64,
}

/// Strategy-by-strategy comparison across reports, row order following the
/// input reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Writes the table as CSV with header `strategy,aut_full,aut_half,lc,qc`.
    pub fn write_csv(&self, mut writer: impl Write) -> Result<(), HarnessError> {
        writeln!(writer, "strategy,aut_full,aut_half,lc,qc")?;
        for row in &self.rows {
            writeln!(
                writer,
                "{},{},{},{},{}",
                row.strategy, row.aut_full, row.aut_half, row.labeling_cost, row.quarantine_cost
            )?;
        }
        Ok(())
    }
}

/// The four experimental designs whose F1 the bias table contrasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasSetting {
    /// Stratified 10-fold cross-validation: folds mix all time periods, so
    /// training freely sees the future.
    TenfoldCv,
    /// Train on a middle time segment, test on past and future pooled.
    TemporallyInconsistent,
    /// Goodware and malware training sets drawn from disjoint time windows
    /// (and tested likewise).
    InconsistentClassWindows,
    /// Train on the earliest segment, test forward slot by slot; the value
    /// is the area under the F1 decay curve.
    TemporallyConsistent,
}

impl BiasSetting {
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            BiasSetting::TenfoldCv => "tenfold_cv",
            BiasSetting::TemporallyInconsistent => "temporally_inconsistent",
            BiasSetting::InconsistentClassWindows => "inconsistent_class_windows",
            BiasSetting::TemporallyConsistent => "temporally_consistent",
        }
    }
}

/// One cell: a design evaluated at a forced testing malware ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCell {
    pub setting: BiasSetting,
    pub test_ratio: f64,
    /// Pooled F1 for the first three settings; area under the F1 decay
    /// curve for the temporally consistent one.
    pub f1: f64,
}

/// The 4 × 2 grid of designs × testing ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub sigma_hat: f64,
    pub cells: Vec<BiasCell>,
}

impl BiasTable {
    /// Looks up one cell's value.
    #[must_use]
    pub fn cell(&self, setting: BiasSetting, test_ratio: f64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.setting == setting && (c.test_ratio - test_ratio).abs() < 1e-12)
            .map(|c| c.f1)
    }

    /// Writes the grid as CSV with header `setting,test_ratio,f1`.
    pub fn write_csv(&self, mut writer: impl Write) -> Result<(), HarnessError> {
        writeln!(writer, "setting,test_ratio,f1")?;
        for cell in &self.cells {
            writeln!(writer, "{},{},{}", cell.setting.name(), cell.test_ratio, cell.f1)?;
        }
        Ok(())
    }
}

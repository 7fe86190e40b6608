//! `drifteval`: run time-aware classifier evaluations from JSON configs.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 constraint
//! violation in strict mode, 4 runtime failure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use drifteval::corpus::{Corpus, CorpusFormat, Label, LoadOptions, load_corpus, write_jsonl};
use drifteval::harness::{
    BiasSetting, BiasTable, ComparisonTable, DriftKind, ExperimentConfig, FixtureSpec,
    HarnessError, RunReport, apply_env_overrides, bias_demo, compare_runs, fit_predict_update,
    load_config, strategy_label, synthetic_corpus, tune_only,
};
use drifteval::tuning::TuningResult;

const EXIT_CONFIG: u8 = 2;
const EXIT_BIASED: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "drifteval",
    version,
    about = "Evaluate binary classifiers on timestamped corpora without temporal or class-balance bias"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and sanitize a corpus, print a summary, optionally re-emit it.
    Ingest(IngestArgs),
    /// Run the full experiment a config describes.
    Evaluate(ConfigArgs),
    /// Run only the training-ratio search of a config.
    Tune(ConfigArgs),
    /// Run a single entry of the config's run list.
    Strategy(StrategyArgs),
    /// Contrast four experimental designs on the config's corpus.
    BiasDemo(ConfigArgs),
    /// Align two or more finished reports into one cost table.
    Compare(CompareArgs),
    /// Summarize an existing report.json.
    Report(ReportArgs),
    /// Generate a synthetic drifting corpus.
    Synth(SynthArgs),
}

/// A config-driven invocation plus the common overrides.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Refuse to report performance when C1/C2/C3 are violated (exit 3).
    #[arg(long, conflicts_with = "warn")]
    strict: bool,
    /// Record constraint violations as warnings and keep going.
    #[arg(long)]
    warn: bool,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StrategyArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Zero-based index into the config's `runs` list.
    #[arg(long)]
    index: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// Finished report.json files over the same corpus and split.
    #[arg(required = true, num_args = 2..)]
    reports: Vec<PathBuf>,
    /// Directory to write compare.csv into.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// An existing report.json.
    report: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Corpus file to load.
    input: PathBuf,
    /// Input format.
    #[arg(long, value_enum, default_value_t = FormatArg::Jsonl)]
    format: FormatArg,
    /// Keep grayware-labeled records instead of dropping them.
    #[arg(long)]
    keep_grayware: bool,
    /// Re-emit the sanitized corpus as JSONL at this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Where to write the JSONL corpus.
    output: PathBuf,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 12)]
    slots: usize,
    /// Malware fraction per slot.
    #[arg(long, default_value_t = 0.1)]
    sigma_hat: f64,
    /// Feature dimension; dimensions past the first two carry pure noise.
    #[arg(long, default_value_t = 2)]
    dimension: usize,
    /// Distance between the class means.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    /// Standard deviation of each cluster.
    #[arg(long, default_value_t = 0.55)]
    spread: f64,
    /// How the malware cluster moves over the slots.
    #[arg(long, value_enum, default_value_t = DriftArg::MeanDrift)]
    drift: DriftArg,
    /// Slot at which the clusters swap roles (with --drift label-flip).
    #[arg(long)]
    flip_at: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First day of the first slot.
    #[arg(long, default_value = "2014-01-01")]
    start: NaiveDate,
    #[arg(long, default_value_t = 30)]
    slot_days: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Jsonl,
    SvmlightTs,
}

impl From<FormatArg> for CorpusFormat {
    fn from(format: FormatArg) -> Self {
        match format {
            FormatArg::Jsonl => CorpusFormat::Jsonl,
            FormatArg::SvmlightTs => CorpusFormat::SvmlightTs,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DriftArg {
    None,
    MeanDrift,
    LabelFlip,
}

/// An error carrying the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(message: String) -> Self {
        Failure {
            code: EXIT_CONFIG,
            error: anyhow::anyhow!(message),
        }
    }

    fn biased(message: String) -> Self {
        Failure {
            code: EXIT_BIASED,
            error: anyhow::anyhow!(message),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(error: HarnessError) -> Self {
        let code = if error.is_config_error() {
            EXIT_CONFIG
        } else {
            EXIT_RUNTIME
        };
        Failure {
            code,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            error,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest(args) => ingest(&args),
        Command::Evaluate(args) => evaluate(&args),
        Command::Tune(args) => tune(&args),
        Command::Strategy(args) => strategy(&args),
        Command::BiasDemo(args) => run_bias_demo(&args),
        Command::Compare(args) => compare(&args),
        Command::Report(args) => summarize(&args.report),
        Command::Synth(args) => synth(&args),
    }
}

impl ConfigArgs {
    /// Loads the config and applies the override chain: file, then
    /// environment (seed and paths only), then command-line flags.
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut config = load_config(&self.config)?;
        apply_env_overrides(&mut config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if self.strict {
            config.strict = true;
        }
        if self.warn {
            config.strict = false;
        }
        Ok(config)
    }
}

fn evaluate(args: &ConfigArgs) -> Result<(), Failure> {
    let config = args.load()?;
    let report = fit_predict_update(&config)?;
    print_report(&report);
    fail_if_biased_strict(&report)
}

fn strategy(args: &StrategyArgs) -> Result<(), Failure> {
    let mut config = args.config.load()?;
    if args.index >= config.runs.len() {
        return Err(Failure::config(format!(
            "--index {} is out of range; the config has {} runs",
            args.index,
            config.runs.len()
        )));
    }
    config.runs = vec![config.runs[args.index].clone()];
    let report = fit_predict_update(&config)?;
    print_report(&report);
    fail_if_biased_strict(&report)
}

/// Strict runs with a constraint violation exit 3; the report (already
/// written) carries the violation in place of performance numbers.
fn fail_if_biased_strict(report: &RunReport) -> Result<(), Failure> {
    match (&report.biased, report.config.strict) {
        (Some(violated), true) => Err(Failure::biased(format!(
            "constraints violated ({violated}); strict mode withheld performance numbers (see {})",
            report.config.out_dir.join("report.json").display()
        ))),
        _ => Ok(()),
    }
}

fn tune(args: &ConfigArgs) -> Result<(), Failure> {
    let config = args.load()?;
    let outcome = tune_only(&config)?;
    print_tuning(&outcome.result);
    println!(
        "trace:      {} ({} grid points)",
        config.out_dir.join(&outcome.trace_file).display(),
        outcome.result.trace.len()
    );
    Ok(())
}

fn print_tuning(result: &TuningResult) {
    println!("phi* = {:.4}  (baseline sigma_hat = {:.4})", result.phi_star, result.sigma_hat);
    println!(
        "validation AUT {:.4} at phi*, {:.4} at the baseline",
        result.p_star, result.baseline_aut
    );
}

fn run_bias_demo(args: &ConfigArgs) -> Result<(), Failure> {
    let config = args.load()?;
    let options = LoadOptions {
        keep_grayware: config.corpus.keep_grayware,
        ..LoadOptions::default()
    };
    let (corpus, _) = load_corpus(&config.corpus.path, config.corpus.format, &options)
        .map_err(HarnessError::from)?;
    let table = bias_demo(&corpus, &config.learner, config.balance.sigma_hat, config.seed)?;

    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("cannot create {}", config.out_dir.display()))?;
    let path = config.out_dir.join("bias.csv");
    let writer = BufWriter::new(
        File::create(&path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    table.write_csv(writer)?;

    print_bias_table(&table);
    println!("wrote {}", path.display());
    Ok(())
}

fn print_bias_table(table: &BiasTable) {
    let ratios = [table.sigma_hat, 0.9];
    println!(
        "{:<28} {:>12} {:>12}",
        "setting",
        format!("delta={}", ratios[0]),
        format!("delta={}", ratios[1])
    );
    for setting in [
        BiasSetting::TenfoldCv,
        BiasSetting::TemporallyInconsistent,
        BiasSetting::InconsistentClassWindows,
        BiasSetting::TemporallyConsistent,
    ] {
        let cell = |ratio: f64| {
            table
                .cell(setting, ratio)
                .map_or_else(|| "n/a".to_owned(), |f1| format!("{f1:.4}"))
        };
        println!(
            "{:<28} {:>12} {:>12}",
            setting.name(),
            cell(ratios[0]),
            cell(ratios[1])
        );
    }
}

fn compare(args: &CompareArgs) -> Result<(), Failure> {
    let mut reports = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        reports.push(RunReport::load(path)?);
    }
    let table = compare_runs(&reports)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let path = args.out.join("compare.csv");
    let writer = BufWriter::new(
        File::create(&path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    table.write_csv(writer)?;

    print_comparison(&table);
    println!("wrote {}", path.display());
    Ok(())
}

fn print_comparison(table: &ComparisonTable) {
    println!(
        "{:<36} {:>8} {:>8} {:>8} {:>8}",
        "strategy", "aut", "aut_half", "lc", "qc"
    );
    for row in &table.rows {
        println!(
            "{:<36} {:>8.4} {:>8.4} {:>8} {:>8}",
            row.strategy, row.aut_full, row.aut_half, row.labeling_cost, row.quarantine_cost
        );
    }
}

fn summarize(path: &Path) -> Result<(), Failure> {
    let report = RunReport::load(path)?;
    print_report(&report);
    Ok(())
}

fn print_report(report: &RunReport) {
    let fmt_opt = |value: Option<f64>| value.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"));
    println!("corpus:     {}", report.config.corpus.path.display());
    println!(
        "balance:    sigma_hat {} phi {} delta {}",
        report.balance.sigma_hat,
        fmt_opt(report.balance.phi),
        fmt_opt(report.balance.delta)
    );
    match &report.biased {
        Some(violated) if report.runs.is_empty() => {
            println!("constraints: violated ({violated}); performance withheld");
        }
        Some(violated) => println!("constraints: violated ({violated}); warn mode proceeded"),
        None => println!("constraints: ok"),
    }
    for warning in &report.warnings {
        println!("warning:    {warning}");
    }
    if let Some(tuning) = &report.tuning {
        print_tuning(&tuning.result);
    }
    for (index, run) in report.runs.iter().enumerate() {
        println!(
            "run {index:02} {}: AUT(F1) point {} / cumulative {}, Lc {}, Qc {}",
            strategy_label(&run.strategy),
            fmt_opt(run.aut_point),
            fmt_opt(run.aut_cumulative),
            run.labeling_cost,
            run.quarantine_cost
        );
        if let Some(windows) = &run.windowed_aut {
            let parts: Vec<String> = windows
                .iter()
                .map(|w| format!("{:.4} through slot {}", w.value, w.end_slot))
                .collect();
            println!("       windowed AUT: {}", parts.join(", "));
        }
    }
    println!(
        "report:     {}",
        report.config.out_dir.join("report.json").display()
    );
}

fn ingest(args: &IngestArgs) -> Result<(), Failure> {
    if !args.input.exists() {
        return Err(Failure::config(format!(
            "input {} does not exist",
            args.input.display()
        )));
    }
    let options = LoadOptions {
        keep_grayware: args.keep_grayware,
        ..LoadOptions::default()
    };
    let (corpus, sanitization) =
        load_corpus(&args.input, args.format.into(), &options).map_err(HarnessError::from)?;

    println!("loaded {} samples from {}", corpus.len(), args.input.display());
    if let Some(span) = corpus_span(&corpus) {
        println!("  span:      {} .. {}", span.0, span.1);
    }
    println!("  dimension: {}", corpus.dimension());
    let (goodware, malware, grayware) = class_counts(&corpus);
    print!("  classes:   {goodware} goodware / {malware} malware");
    if grayware > 0 {
        print!(" / {grayware} grayware");
    }
    println!();
    println!(
        "  dropped:   {} bad timestamp, {} malformed, {} grayware",
        sanitization.rejected_bad_timestamp,
        sanitization.rejected_malformed,
        sanitization.rejected_grayware
    );

    if let Some(out) = &args.out {
        let writer = BufWriter::new(
            File::create(out).with_context(|| format!("cannot create {}", out.display()))?,
        );
        write_jsonl(&corpus, writer).map_err(HarnessError::from)?;
        println!("wrote normalized JSONL to {}", out.display());
    }
    Ok(())
}

fn corpus_span(corpus: &Corpus) -> Option<(NaiveDate, NaiveDate)> {
    let samples = corpus.samples();
    Some((samples.first()?.timestamp, samples.last()?.timestamp))
}

fn class_counts(corpus: &Corpus) -> (usize, usize, usize) {
    let mut counts = (0, 0, 0);
    for sample in corpus.samples() {
        match sample.label {
            Label::Goodware => counts.0 += 1,
            Label::Malware => counts.1 += 1,
            Label::Grayware => counts.2 += 1,
        }
    }
    counts
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let drift = match (args.drift, args.flip_at) {
        (DriftArg::None, None) => DriftKind::None,
        (DriftArg::MeanDrift, None) => DriftKind::MeanDrift,
        (DriftArg::LabelFlip, Some(at_slot)) => DriftKind::LabelFlip { at_slot },
        (DriftArg::LabelFlip, None) => {
            return Err(Failure::config(
                "--drift label-flip needs --flip-at <slot>".to_owned(),
            ));
        }
        (_, Some(_)) => {
            return Err(Failure::config(
                "--flip-at only applies to --drift label-flip".to_owned(),
            ));
        }
    };
    let spec = FixtureSpec {
        n_samples: args.samples,
        n_slots: args.slots,
        sigma_hat: args.sigma_hat,
        dimension: args.dimension,
        separation: args.separation,
        spread: args.spread,
        drift,
        seed: args.seed,
        start: args.start,
        slot_days: args.slot_days,
    };
    let corpus = synthetic_corpus(&spec).map_err(|error| Failure {
        code: EXIT_CONFIG,
        error: error.into(),
    })?;
    let writer = BufWriter::new(
        File::create(&args.output)
            .with_context(|| format!("cannot create {}", args.output.display()))?,
    );
    write_jsonl(&corpus, writer).map_err(HarnessError::from)?;

    let span = corpus_span(&corpus).expect("fixtures are never empty");
    println!(
        "wrote {} samples ({} slots, {} .. {}) to {}",
        corpus.len(),
        args.slots,
        span.0,
        span.1,
        args.output.display()
    );
    Ok(())
}

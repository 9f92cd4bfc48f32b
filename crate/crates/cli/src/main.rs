//! Command line front end: train and score single models, run repeated
//! experiments, sweep a parameter axis, and draw synthetic datasets.
//!
//! Every subcommand reads the same TOML experiment config. Exit codes:
//! 0 success, 2 invalid configuration, 3 unreadable or malformed data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use denfair::{
    accuracy, empirical_rates, group_rates, load_dataset, omega, report_to_json, run_experiment,
    sweep, write_csv, write_report, ConstraintConfig, DatasetSchema, DatasetSource, Error,
    ExperimentConfig, LinearClassifier, ProtectedColumn, Result, SolveStatus, SolverConfig,
    SweepAxis, SyntheticSpec,
};

#[derive(Parser)]
#[command(
    name = "denfair",
    version,
    about = "Fair classification under noisy protected attributes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one denoised-constraint classifier on the configured dataset
    /// and write the model as JSON.
    Train(TrainArgs),
    /// Score a saved model on the configured dataset.
    Evaluate(EvaluateArgs),
    /// Run the repeated inject/train/evaluate experiment and write the
    /// aggregated report as JSON.
    Experiment(ExperimentArgs),
    /// Run the experiment once per axis value and merge the summaries into
    /// one plot-ready CSV.
    Sweep(SweepArgs),
    /// Draw the configured synthetic dataset and write it as CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (TOML).
    #[arg(long, short = 'c', value_name = "FILE")]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Model output path; stdout when omitted.
    #[arg(long, short = 'o', value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, short = 'c', value_name = "FILE")]
    config: PathBuf,
    /// Model JSON written by `train`.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Report output path; stdout when omitted.
    #[arg(long, short = 'o', value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, short = 'c', value_name = "FILE")]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Report output path; stdout when omitted.
    #[arg(long, short = 'o', value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, short = 'c', value_name = "FILE")]
    config: PathBuf,
    /// Swept parameter: tau, eta, or assumed_eta.
    #[arg(long, value_parser = parse_axis)]
    axis: SweepAxis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true, value_name = "V1,V2,...")]
    values: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Merged CSV output path; stdout when omitted.
    #[arg(long, short = 'o', value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the full per-point reports into this directory.
    #[arg(long, value_name = "DIR")]
    report_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short = 'c', value_name = "FILE")]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path.
    #[arg(long, short = 'o', value_name = "FILE")]
    out: PathBuf,
}

fn parse_axis(text: &str) -> std::result::Result<SweepAxis, String> {
    match text {
        "tau" => Ok(SweepAxis::Tau),
        "eta" => Ok(SweepAxis::Eta),
        "assumed_eta" => Ok(SweepAxis::AssumedEta),
        other => Err(format!(
            "unknown axis {other:?}, expected tau, eta, or assumed_eta"
        )),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

/// Maps error variants onto the documented exit codes. Parameter and
/// channel-shape problems are config errors; unreadable files and rows the
/// schema rejects are data errors; numeric failures fall through to 1.
fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_)
        | Error::InvalidParameter { .. }
        | Error::BadProportions { .. }
        | Error::RowSum { .. }
        | Error::Dominance { .. }
        | Error::EntryRange { .. }
        | Error::Shape { .. }
        | Error::SingularMatrix
        | Error::BinaryOnly { .. }
        | Error::AttributeOutOfRange { .. } => 2,
        Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::Parse { .. }
        | Error::UnknownCategory { .. }
        | Error::MissingColumn { .. }
        | Error::GroupRange { .. }
        | Error::LengthMismatch { .. }
        | Error::DimensionMismatch { .. }
        | Error::EmptySplit { .. } => 3,
        _ => 1,
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_toml_file(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn status_label(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::IterationLimit => "hit the iteration limit",
        SolveStatus::Infeasible => "ended infeasible",
    }
}

/// Trains the denoised program once, on the dataset as loaded, for the
/// first configured metric and tau. The assumed channel describes how the
/// recorded attribute was corrupted; no extra noise is injected here.
fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let dataset = load_dataset(&config.dataset, config.seed)?;
    let channel = config
        .assumed_noise
        .as_ref()
        .unwrap_or(&config.noise)
        .build()?;
    let plan = &config.metrics[0];
    let tau = plan
        .taus
        .first()
        .copied()
        .ok_or_else(|| Error::invalid("taus", "training needs at least one tau"))?;
    let constraint = ConstraintConfig::new(
        plan.metric,
        config.attribute,
        tau,
        config.delta,
        config.lambda,
    )?;
    let solver = SolverConfig {
        seed: config.seed,
        ..config.solver.clone()
    };
    let (model, result) = denfair::train_denoised(
        &dataset,
        &[(constraint, channel)],
        &solver,
        config.ridge,
        config.surrogate,
    )?;
    eprintln!(
        "{} after {} outer iterations, objective {:.6}, max violation {:.3e}",
        status_label(result.status),
        result.iterations,
        result.objective,
        result.max_violation
    );
    let mut text = model.to_json();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    emit(args.out.as_deref(), &text)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let dataset = load_dataset(&config.dataset, config.seed)?;
    let model = LinearClassifier::from_json(&std::fs::read_to_string(&args.model)?)?;
    let predictions = model.predict(dataset.features())?;
    let mut metric_values = Vec::new();
    for plan in &config.metrics {
        let rates = group_rates(&empirical_rates(
            &predictions,
            &dataset,
            config.attribute,
            plan.metric,
        )?);
        let ratio = match omega(&rates) {
            Ok(v) => Some(v),
            Err(Error::AllUndefined) => None,
            Err(e) => return Err(e),
        };
        metric_values.push(serde_json::json!({
            "metric": plan.metric.name(),
            "omega": ratio,
            "group_rates": rates,
        }));
    }
    let report = serde_json::json!({
        "n": dataset.len(),
        "accuracy": accuracy(&predictions, dataset.labels())?,
        "metrics": metric_values,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit(args.out.as_deref(), &text)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let report = run_experiment(&config)?;
    emit(args.out.as_deref(), &report_to_json(&report)?)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let (reports, series) = sweep(&config, args.axis, &args.values)?;
    if let Some(dir) = &args.report_dir {
        std::fs::create_dir_all(dir)?;
        for (i, report) in reports.iter().enumerate() {
            write_report(report, &dir.join(format!("point_{i:02}.json")))?;
        }
    }
    emit(args.out.as_deref(), &series)
}

/// Column layout for synthetic CSV output. All columns are written
/// explicitly (the generated intercept column included) so reading the file
/// back with this same schema reproduces the feature matrix.
fn synthetic_schema(spec: &SyntheticSpec) -> DatasetSchema {
    let mut feature_columns: Vec<String> = (0..spec.dim).map(|j| format!("x{j}")).collect();
    if spec.add_intercept {
        feature_columns.push("intercept".to_owned());
    }
    DatasetSchema {
        feature_columns,
        protected_columns: vec![ProtectedColumn {
            name: "group".to_owned(),
            categories: (0..spec.groups()).map(|g| format!("g{g}")).collect(),
        }],
        label_column: "label".to_owned(),
        positive_label: "1".to_owned(),
        add_intercept: false,
        include_protected_features: false,
    }
}

/// Writes the exact base dataset an experiment with this config would draw.
fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = load_config(&args.config, args.seed)?;
    let spec = match &config.dataset {
        DatasetSource::Synthetic(spec) => spec.clone(),
        DatasetSource::Csv { .. } => {
            return Err(Error::Config(
                "synth needs a synthetic dataset in [dataset.synthetic]".to_owned(),
            ))
        }
    };
    let dataset = load_dataset(&config.dataset, config.seed)?;
    write_csv(&args.out, &dataset, &synthetic_schema(&spec))?;
    eprintln!("wrote {} rows to {}", dataset.len(), args.out.display());
    Ok(())
}

//! `augpipe` — class-conditional text augmentation with centroid filtering.
//!
//! The pipeline finetunes a generative model per class on marker-wrapped
//! training text, samples new candidates from class prefixes, and keeps only
//! candidates whose embedding lies close to the class centroid. Subcommands
//! cover the end-to-end run (`augment`), the individual stages
//! (`prepare`/`finetune`/`generate`/`filter`/`calibrate`), the EDA comparison
//! baseline, evaluation and reporting, dataset splitting, and the reference
//! backend server.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 backend transport
//! failure, 3 interrupted with resumable state on disk. Data goes to stdout,
//! diagnostics to stderr.

mod config;
mod runs;
mod stages;
mod util;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use augpipe::eval::MetricKind;

use config::{load_config, PipelineFlags, Settings};
use runs::EvaluateInputs;
use util::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "augpipe",
    version,
    about = "Class-conditional text augmentation with centroid filtering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline subcommand.
#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long, global = false)]
    config: Option<PathBuf>,

    #[command(flatten)]
    flags: PipelineFlags,
}

impl CommonArgs {
    fn settings(&self) -> Result<Settings, CliError> {
        let file = load_config(self.config.as_deref())?;
        Ok(Settings::resolve(file.as_ref(), &self.flags))
    }
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Labeled dataset (JSONL: {"id", "text", "label"[, "title"]}).
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for stage artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory holding `prepare` artifacts; models are written here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory holding `prepare` and `finetune` artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Stop after this many sample slots (the run exits with code 3 and can
    /// be continued with --resume).
    #[arg(long)]
    limit: Option<u64>,
    /// Continue an interrupted generation run recorded in the manifest.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    resume: bool,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Labeled dataset providing the class instances for centroids.
    #[arg(long)]
    dataset: PathBuf,
    /// Directory holding `generate` artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Labeled dataset providing the class instances for centroids.
    #[arg(long)]
    dataset: PathBuf,
    /// Directory holding `generate` artifacts.
    #[arg(long)]
    out: PathBuf,
    /// How many of the most distant candidates to surface.
    #[arg(long, default_value_t = 10)]
    review: usize,
    /// Review candidates one by one on the terminal (y/n per candidate) and
    /// propose a threshold from the answers.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    interactive: bool,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Labeled dataset to augment.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory (augmented.jsonl, augment_report.json, manifest).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EdaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Labeled dataset to augment.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory (eda.jsonl, manifest).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Baseline training dataset.
    #[arg(long)]
    train: PathBuf,
    /// Holdout dataset all conditions are scored on.
    #[arg(long)]
    holdout: PathBuf,
    /// EDA-augmented training dataset (optional condition).
    #[arg(long)]
    eda: Option<PathBuf>,
    /// Generatively augmented training dataset (optional condition).
    #[arg(long)]
    textgen: Option<PathBuf>,
    /// Dataset name used in reports.
    #[arg(long, default_value = "dataset")]
    name: String,
    /// Positive class for binary F1 (default: the rarest training class).
    #[arg(long)]
    positive_label: Option<String>,
    /// Output directory (report.json, report.txt, manifest).
    #[arg(long)]
    out: PathBuf,
}

/// Which evaluation metric a report tabulates.
#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum EvalMetricArg {
    Accuracy,
    F1,
}

impl EvalMetricArg {
    fn to_kind(self) -> MetricKind {
        match self {
            EvalMetricArg::Accuracy => MetricKind::Accuracy,
            EvalMetricArg::F1 => MetricKind::F1,
        }
    }
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Evaluation report (report.json); repeat for several datasets.
    #[arg(long = "input", required = true, action = clap::ArgAction::Append)]
    inputs: Vec<PathBuf>,
    /// Metric to tabulate deltas for.
    #[arg(long, value_enum, default_value_t = EvalMetricArg::F1)]
    metric: EvalMetricArg,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Labeled dataset to split.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory (train.jsonl, holdout.jsonl, manifest).
    #[arg(long)]
    out: PathBuf,
    /// Fraction of each class moved to the holdout set.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    /// Stratified-subsample the training side down to this many instances.
    #[arg(long)]
    subsample: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Wrap class instances in markers and derive sampling prefixes.
    Prepare(PrepareArgs),
    /// Finetune the reference model per class on prepared text.
    Finetune(FinetuneArgs),
    /// Sample candidates per class; interruptible and resumable.
    Generate(GenerateArgs),
    /// Keep candidates near the class embedding centroid.
    Filter(FilterArgs),
    /// Inspect the candidate distance distribution to pick a threshold.
    Calibrate(CalibrateArgs),
    /// Run the whole pipeline: prepare, finetune, generate, filter.
    Augment(AugmentArgs),
    /// Token-level augmentation baseline (swaps and deletions).
    Eda(EdaArgs),
    /// Score baseline and augmented training sets over repeated seeded runs.
    Evaluate(EvaluateArgs),
    /// Tabulate augmented-vs-baseline deltas from evaluation reports.
    Report(ReportArgs),
    /// Stratified train/holdout split, optionally subsampling the train side.
    Split(SplitArgs),
    /// Serve the reference backend over stdin/stdout (line-delimited JSON).
    #[command(name = "backend-serve")]
    BackendServe,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare(args) => {
            let settings = args.common.settings()?;
            stages::cmd_prepare(&settings, &args.dataset, &args.out)
        }
        Command::Finetune(args) => {
            let settings = args.common.settings()?;
            stages::cmd_finetune(&settings, &args.out)
        }
        Command::Generate(args) => {
            let settings = args.common.settings()?;
            stages::cmd_generate(&settings, &args.out, args.limit, args.resume)
        }
        Command::Filter(args) => {
            let settings = args.common.settings()?;
            stages::cmd_filter(&settings, &args.dataset, &args.out)
        }
        Command::Calibrate(args) => {
            let settings = args.common.settings()?;
            stages::cmd_calibrate(
                &settings,
                &args.dataset,
                &args.out,
                args.review,
                args.interactive,
            )
        }
        Command::Augment(args) => {
            let settings = args.common.settings()?;
            runs::cmd_augment(&settings, &args.dataset, &args.out)
        }
        Command::Eda(args) => {
            let settings = args.common.settings()?;
            runs::cmd_eda(&settings, &args.dataset, &args.out)
        }
        Command::Evaluate(args) => {
            let settings = args.common.settings()?;
            let inputs = EvaluateInputs {
                train: &args.train,
                holdout: &args.holdout,
                eda: args.eda.as_deref(),
                textgen: args.textgen.as_deref(),
                name: &args.name,
                positive_label: args.positive_label.as_deref(),
            };
            runs::cmd_evaluate(&settings, &inputs, &args.out)
        }
        Command::Report(args) => {
            runs::cmd_report(&args.inputs, args.metric.to_kind(), args.out.as_deref())
        }
        Command::Split(args) => {
            let settings = args.common.settings()?;
            runs::cmd_split(
                &settings,
                &args.dataset,
                &args.out,
                args.fraction,
                args.subsample,
            )
        }
        Command::BackendServe => runs::cmd_backend_serve(),
    }
}

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => match run(cli) {
            Ok(()) => 0,
            Err(error) => {
                match &error {
                    CliError::Interrupted(message) => eprintln!("interrupted: {message}"),
                    other => eprintln!("error: {}", other.message()),
                }
                error.exit_code()
            }
        },
        Err(parse_error) => {
            let code = match parse_error.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = parse_error.print();
            code
        }
    };
    std::process::exit(code);
}

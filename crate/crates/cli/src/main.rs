//! `dfsmc` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfsmc::{Arch, Split};

/// Malware family classification with fused CNN features and a linear SVM.
#[derive(Debug, Parser)]
#[command(name = "dfsmc", version)]
pub struct Cli {
    /// `key = value` run configuration; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn every binary under a directory tree into a grayscale PGM image.
    Convert {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
        #[arg(long = "out", value_name = "DIR")]
        output: PathBuf,
    },
    /// Index `<data>/<family>/<image>` and split each family into train and test.
    Split {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Write transformed copies of the training images and a manifest listing them.
    Augment {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long)]
        copies: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `<manifest stem>.aug.tsv` beside the input manifest.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Train a feature extractor on the manifest's training split.
    Train(TrainArgs),
    /// Extract penultimate-layer features to a CSV cache.
    Features {
        #[arg(long, value_name = "FILE")]
        weights: PathBuf,
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train the multiclass SVM on fused residual and dense features.
    FuseSvm {
        #[arg(long, value_name = "FILE")]
        resnet_cache: PathBuf,
        #[arg(long, value_name = "FILE")]
        densenet_cache: PathBuf,
        /// Soft-margin cost.
        #[arg(long = "C", value_name = "C")]
        cost: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Classify one image with the full pipeline.
    Predict {
        #[command(flatten)]
        models: PipelineModels,
        #[arg(long, value_name = "FILE")]
        image: PathBuf,
        /// Manifest whose family names label the prediction.
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
    },
    /// Evaluate the pipeline on the test split and write a report directory.
    Eval {
        #[command(flatten)]
        models: PipelineModels,
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Also evaluate each extractor's own softmax head and write a comparison table.
        #[arg(long)]
        baselines: bool,
    },
    /// Run every stage on `<data>/<family>/<image>`: split, augment, train
    /// both extractors, fit the fused SVM and write reports under `--out`.
    Run {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Check every backward pass against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a small synthetic texture dataset for trying the pipeline out.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub arch: Arch,
    #[arg(long, value_enum, default_value_t = Scheme::Scratch)]
    pub scheme: Scheme,
    /// Pretrained weights to fine-tune from.
    #[arg(long, value_name = "FILE", required_if_eq("scheme", "finetune"))]
    pub source_weights: Option<PathBuf>,
    /// When fine-tuning, only train the new head.
    #[arg(long)]
    pub freeze: bool,
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PipelineModels {
    #[arg(long, value_name = "FILE")]
    pub svm: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub resnet_weights: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub densenet_weights: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    /// Glorot-uniform initialization.
    Scratch,
    /// Start from `--source-weights` with a new head and a tenth of the learning rate.
    Finetune,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if commands::is_usage_error(&e) {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}

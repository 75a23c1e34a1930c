//! `mugan`: train, edit, evaluate and ablate attention U-Net GAN variants.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::TrainSettings;

#[derive(Parser)]
#[command(name = "mugan", version = manifest::CODE_VERSION, about = "Facial attribute editing with an attention U-Net GAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator/critic pair.
    Train(TrainCmd),
    /// Edit one image with a trained generator.
    Edit(EditCmd),
    /// Measure attribute accuracy and reconstruction quality.
    Eval(EvalCmd),
    /// Train the attribute classifier used by `eval`.
    TrainClassifier(ClassifierCmd),
    /// Train and evaluate several variants, then tabulate them.
    Ablate(AblateCmd),
    /// Write a synthetic face corpus in the CelebA layout.
    Synth(SynthCmd),
}

#[derive(clap::Args)]
pub struct TrainCmd {
    /// Flat JSON settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: TrainSettings,
    /// Run directory for checkpoints, logs, samples and the manifest.
    #[arg(long)]
    pub output: PathBuf,
    /// Continue from a training checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct EditCmd {
    /// Training checkpoint holding the generator.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A 178x218 source image; requires --labels.
    #[arg(long, conflicts_with = "record")]
    pub image: Option<PathBuf>,
    /// Source labels as 13 binary digits in attribute order.
    #[arg(long, requires = "image")]
    pub labels: Option<String>,
    /// File name of a dataset record; labels come from the annotations.
    #[arg(long)]
    pub record: Option<String>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Attribute edits `Name=0|1`, comma separated or repeated. Without any,
    /// the image is reconstructed.
    #[arg(long = "set")]
    pub set: Vec<String>,
    /// Edited image (PNG).
    #[arg(long)]
    pub output: PathBuf,
    /// Also write input, reconstruction and all 13 single flips as one row.
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Accuracy,
    Reconstruction,
    Both,
}

#[derive(clap::Args)]
pub struct EvalCmd {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Classifier checkpoint from `train-classifier` (needed for accuracy).
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EvalMode::Both)]
    pub mode: EvalMode,
    /// Expected variant; a checkpoint of another graph is rejected.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Evaluate only the first N images of the split.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Directory for report.tsv, report.txt and the manifest.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(clap::Args)]
pub struct ClassifierCmd {
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Comma-separated attribute subset (default: all 13).
    #[arg(long)]
    pub attributes: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub epochs: u64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub image_size: usize,
    #[arg(long, default_value_t = 64)]
    pub base_width: usize,
    /// Basic blocks per residual group.
    #[arg(long, default_value = "3,4,6")]
    pub groups: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = false)]
    pub hflip: bool,
    #[arg(long, default_value_t = 170)]
    pub crop: u32,
    /// Use only the first N records of the annotation file.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Directory for classifier.ckpt and the manifest.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(clap::Args)]
pub struct AblateCmd {
    /// Comma-separated variant ids, e.g. M0,M1,M2,M3 or Feat_8,Feat_16.
    #[arg(long)]
    pub variants: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: TrainSettings,
    /// Classifier checkpoint; without it only reconstruction is reported.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Evaluate on the first N test images.
    #[arg(long)]
    pub eval_limit: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(clap::Args)]
pub struct SynthCmd {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(c) => commands::train(c),
        Command::Edit(c) => commands::edit(c),
        Command::Eval(c) => commands::eval(c),
        Command::TrainClassifier(c) => commands::train_classifier(c),
        Command::Ablate(c) => commands::ablate(c),
        Command::Synth(c) => commands::synth(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

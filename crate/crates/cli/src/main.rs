//! `gated-depth`: depth from three gated-imaging slices, from simulation to
//! evaluation.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gated-depth", version, about = "Depth estimation from three gated-imaging slices")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Run configuration file (`key = value` lines); defaults apply otherwise.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override a single config key, e.g. `--set noise.sigma=1.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Global seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel stages. Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Directory for outputs and run manifests.
    #[arg(long, global = true, env = "GATED_DEPTH_OUTPUT_DIR", value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the range-intensity profile of each slice as CSV.
    Rip(RipArgs),
    /// Generate labelled samples or slice images from the forward model.
    Simulate(SimulateArgs),
    /// Prefilter samples and build one dataset variant.
    Preprocess(PreprocessArgs),
    /// Train a network on a dataset CSV.
    Train(TrainArgs),
    /// Train every grid configuration on every dataset and rank them.
    Gridsearch(GridArgs),
    /// Estimate range for single triples or a samples CSV.
    Predict(PredictArgs),
    /// Render a depth map from three slice images.
    Depthmap(DepthmapArgs),
    /// Compare the network and the baseline on a labelled test set.
    Eval(EvalArgs),
    /// Evaluate a model on every valid intensity triple.
    Probe(ProbeArgs),
    /// Write the baseline's section table.
    Sections(SectionsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rip(_) => "rip",
            Command::Simulate(_) => "simulate",
            Command::Preprocess(_) => "preprocess",
            Command::Train(_) => "train",
            Command::Gridsearch(_) => "gridsearch",
            Command::Predict(_) => "predict",
            Command::Depthmap(_) => "depthmap",
            Command::Eval(_) => "eval",
            Command::Probe(_) => "probe",
            Command::Sections(_) => "sections",
        }
    }
}

#[derive(Debug, Args)]
pub struct RipArgs {
    /// Distance step of the profile grid (m).
    #[arg(long, default_value_t = 0.1)]
    pub step_m: f64,
    /// Largest distance on the grid (m).
    #[arg(long, default_value_t = 200.0)]
    pub r_max_m: f64,
    /// Include the reflectance/r² irradiance factor.
    #[arg(long)]
    pub irradiance: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneKind {
    /// Independent (triple, range) samples written as CSV.
    Samples,
    /// Depth ramping across the image columns.
    Ramp,
    /// A fronto-parallel plane at constant depth.
    Plane,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SceneKind::Samples)]
    pub scene: SceneKind,
    /// Number of samples; overrides `scene.samples`.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Image width for image scenes.
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    /// Image height for image scenes.
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    /// Near depth of the scene (m); the plane depth for `plane`.
    #[arg(long, default_value_t = 10.0)]
    pub r_lo_m: f64,
    /// Far depth of a ramp (m).
    #[arg(long, default_value_t = 150.0)]
    pub r_hi_m: f64,
    /// Reflectance of image scenes.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Noise stream name; different names give independent noise.
    #[arg(long, default_value = "simulate")]
    pub stream: String,
    /// Output CSV for `samples` (default `<output-dir>/samples.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Samples CSV with header `s1,s2,s3,r`.
    #[arg(long)]
    pub input: PathBuf,
    /// dataset1..dataset4; overrides `dataset.variant`.
    #[arg(long)]
    pub variant: Option<String>,
    /// Output CSV (default `<output-dir>/<variant>.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV; split into train and validation by `dataset.train_fraction`.
    #[arg(long)]
    pub input: PathBuf,
    /// Model file (default `<output-dir>/model.txt`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridKind {
    /// 3 learning rates x 8 batch sizes x 10 layouts x 3 activations.
    Full,
    /// The single configuration from the run config.
    Config,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Dataset CSVs; each is split into train and validation. Repeatable.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = GridKind::Full)]
    pub grid: GridKind,
    /// Epoch cap per run; overrides `train.max_epochs`.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Early-stop patience; overrides `train.patience`.
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorKind {
    Network,
    Baseline,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_enum, default_value_t = EstimatorKind::Network)]
    pub estimator: EstimatorKind,
    /// Model file; required for the network estimator.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Raw triple `s1,s2,s3`. Repeatable.
    #[arg(long, value_name = "S1,S2,S3")]
    pub triple: Vec<String>,
    /// Samples CSV; writes `<output-dir>/predictions.csv`.
    #[arg(long, conflicts_with = "triple")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DepthmapArgs {
    #[arg(long, value_enum, default_value_t = EstimatorKind::Network)]
    pub estimator: EstimatorKind,
    /// Model file; required for the network estimator.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// The three 8-bit PGM slice images, nearest slice first.
    #[arg(long, num_args = 3, required = true, value_names = ["SLICE1", "SLICE2", "SLICE3"])]
    pub slices: Vec<PathBuf>,
    /// Output path; `.csv` writes meters, anything else 16-bit PGM
    /// (default `<output-dir>/depth.pgm`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labelled test samples CSV.
    #[arg(long)]
    pub test: PathBuf,
    /// Model file; without it only the baseline is evaluated.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Width of the predicted-range bins (m).
    #[arg(long, default_value_t = 1.0)]
    pub bin_width_m: f64,
}

#[derive(Debug, Args)]
pub struct SectionsArgs {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<rayon::ThreadPoolBuildError> for CliError {
    fn from(e: rayon::ThreadPoolBuildError) -> Self {
        CliError::Usage(format!("--threads: {e}"))
    }
}

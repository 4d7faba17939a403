//! `snapspec` command-line driver.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "snapspec",
    version,
    about = "Single-path snapshot Hadamard spectrometer simulator"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Serial gradient reductions, so training is bit-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an S-matrix as 0/1 CSV.
    GenSmatrix(GenSmatrixArgs),
    /// Write random blob scenes as cube files.
    SynthScenes(SynthScenesArgs),
    /// Code, disperse and add detector noise to a scene cube.
    Simulate(SimulateArgs),
    /// Train the unmixing network on synthetic scenes.
    Train(TrainArgs),
    /// Estimate the coded intensity of a dispersed image.
    Infer(InferArgs),
    /// Recover spectra from a dispersed image.
    Reconstruct(ReconstructArgs),
    /// Run every configured method on shared scenes and noise.
    Compare(CompareArgs),
    /// SNR against a swept perturbation, noise level or checkpoint.
    SnrSweep(SnrSweepArgs),
    /// Compare backpropagated and finite-difference gradients.
    GradCheck(GradCheckArgs),
    /// Per-method statistics from a `compare` output directory.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenSmatrixArgs {
    #[arg(long)]
    pub order: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthScenesArgs {
    #[arg(long)]
    pub order: usize,
    #[arg(long)]
    pub bands: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 4)]
    pub blobs: usize,
    /// Minimum intensity as a fraction of the maximum.
    #[arg(long, default_value_t = 0.05)]
    pub floor: f64,
    #[arg(long)]
    pub seed: u64,
    /// Write binary64 cubes instead of binary32.
    #[arg(long)]
    pub f64: bool,
    /// Output directory (created).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scene cube.
    #[arg(long)]
    pub scene: PathBuf,
    /// `hadamard` or `full-1`.
    #[arg(long, default_value = "hadamard")]
    pub code: String,
    /// `read:<sigma>` or `shot:<alpha>`.
    #[arg(long)]
    pub noise: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub f64: bool,
    /// Dispersed image cube; the noise sidecar goes to `<out>.noise`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the noiseless coded intensity.
    #[arg(long)]
    pub intensity_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 31)]
    pub order: usize,
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    /// Network input height; defaults to the next power of two above the order.
    #[arg(long)]
    pub width: Option<usize>,
    /// `desk`, `full` or `linear`.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long, default_value = "hadamard")]
    pub code: String,
    #[arg(long = "train-count", default_value_t = 200)]
    pub train_count: usize,
    #[arg(long = "val-count", default_value_t = 40)]
    pub val_count: usize,
    #[arg(long, default_value_t = 4)]
    pub blobs: usize,
    /// Minimum scene intensity as a fraction of the maximum.
    #[arg(long, default_value_t = 0.05)]
    pub floor: f64,
    #[arg(long, default_value = "read:0.005")]
    pub noise: String,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// `mse` or `hard-mining`.
    #[arg(long, default_value = "mse")]
    pub loss: String,
    /// Save parameters every N epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Train on every output pixel, including those the code closes.
    #[arg(long)]
    pub no_code_mask: bool,
    #[arg(long)]
    pub seed: u64,
    /// Output directory (created).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Dispersed image cube.
    #[arg(long)]
    pub input: PathBuf,
    /// Zero pixels closed by this code (`hadamard` or `full-1`).
    #[arg(long)]
    pub mask_code: Option<String>,
    #[arg(long)]
    pub f64: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Dispersed image cube.
    #[arg(long)]
    pub input: PathBuf,
    /// `sub-hadamard` or `hts-uniform`.
    #[arg(long, default_value = "sub-hadamard")]
    pub method: String,
    /// Coded intensity cube for `sub-hadamard`.
    #[arg(long)]
    pub intensity: Option<PathBuf>,
    /// Estimate the intensity with this network instead.
    #[arg(long, conflicts_with = "intensity")]
    pub network: Option<PathBuf>,
    /// Code used to mask the network estimate.
    #[arg(long)]
    pub mask_code: Option<String>,
    /// Spectra CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: u64,
    /// Output directory (created).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SnrSweepArgs {
    /// Perturbation coefficients, `S_1 = k·S_snap`.
    #[arg(long, value_delimiter = ',', num_args = 0.., group = "sweep")]
    pub k: Option<Vec<f64>>,
    /// Noise settings such as `read:0.01,read:0.02`.
    #[arg(long = "noise-list", value_delimiter = ',', num_args = 0.., group = "sweep")]
    pub noise_list: Option<Vec<String>>,
    /// Network checkpoints in training order.
    #[arg(long, value_delimiter = ',', num_args = 0.., group = "sweep")]
    pub checkpoints: Option<Vec<PathBuf>>,
    #[arg(long, default_value_t = 31)]
    pub order: usize,
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    #[arg(long, default_value_t = 20)]
    pub scenes: usize,
    #[arg(long, default_value_t = 4)]
    pub blobs: usize,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Minimum scene intensity as a fraction of the maximum.
    #[arg(long, default_value_t = 0.05)]
    pub floor: f64,
    /// Noise for the `k` and checkpoint sweeps.
    #[arg(long, default_value = "read:0.01")]
    pub noise: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    /// Check this network instead of a fresh one.
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long, default_value = "mse")]
    pub loss: String,
    #[arg(long)]
    pub seed: u64,
    /// Per-parameter CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory written by `compare`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: invalid-config: {e}");
            return ExitCode::from(1);
        }
    }
    let det = cli.deterministic;
    let result = match cli.command {
        Command::GenSmatrix(a) => commands::gen_smatrix(&a),
        Command::SynthScenes(a) => commands::synth_scenes(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a, det),
        Command::Infer(a) => commands::infer(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::SnrSweep(a) => commands::snr_sweep(&a),
        Command::GradCheck(a) => commands::grad_check(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

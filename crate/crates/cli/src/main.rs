//! `msdca`: synthesise data, train, evaluate and analyse segmentation models.
//!
//! Exit codes: 0 success, 1 invalid arguments or configuration, 2 numeric
//! failure (non-finite values, failed gradient check), 3 IO or file format
//! error. `MSDCA_THREADS` caps internal parallelism (default 1, serial and
//! bit-reproducible).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msdcanet::analysis::AblationAxis;

mod commands;
mod config;
mod error;

use config::{ModelArgs, TrainArgs};

#[derive(Debug, Parser)]
#[command(name = "msdca", version, about = "Segmentation network training and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct OutDir {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ShapeArg {
    /// Input shape as N,C,H,W.
    #[arg(long, default_value = "1,1,256,256", value_parser = commands::parse_shape)]
    pub input_shape: [usize; 4],
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic blob dataset.
    Synth {
        #[arg(long)]
        n: usize,
        /// Also write a validation split; the output then holds train/ and val/.
        #[arg(long)]
        n_val: Option<usize>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train a model; writes history.csv and best.msdc.
    Train {
        /// Training set, or a directory with train/ and val/ subsets.
        #[arg(long)]
        data: PathBuf,
        /// Validation set (defaults to <data>/val).
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Per-image and aggregate metrics of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Segment one image; writes a 0/255 mask PNG.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Mask PNG to write.
        #[arg(long)]
        out: PathBuf,
        /// Optional PNG of foreground probabilities.
        #[arg(long)]
        logits: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        force: bool,
    },
    /// Paired t-test on per-image MIoU of two checkpoints.
    Compare {
        #[arg(long)]
        ckpt_a: PathBuf,
        #[arg(long)]
        ckpt_b: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Directory for compare.csv and compare.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Parameter count, size and GFLOPs of a preset or checkpoint.
    Stats {
        #[arg(long, conflicts_with = "ckpt", required_unless_present = "ckpt")]
        variant: Option<msdcanet::Variant>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[command(flatten)]
        shape: ShapeArg,
    },
    /// Inference throughput.
    Bench {
        #[arg(long, conflicts_with = "variant", required_unless_present = "variant")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        variant: Option<msdcanet::Variant>,
        #[command(flatten)]
        shape: ShapeArg,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
    },
    /// Finite-difference gradient check of every op, block and a small network.
    Gradcheck {
        /// Only run cases whose name contains this string.
        #[arg(long)]
        module: Option<String>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Grad-CAM heat map for one image.
    Gradcam {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// F3, F4 or F5.
        #[arg(long)]
        layer: String,
        /// PNG with the input and the heat map side by side.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Metrics under added noise.
    Robustness {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// none, gaussian:<variance> or poisson[:<scale>]; repeatable.
        #[arg(long = "noise-spec")]
        noise_specs: Vec<msdcanet::analysis::NoiseSpec>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train and score every configuration along one ablation axis.
    Ablate {
        /// modules, rates, placement or channels.
        #[arg(long)]
        axis: AblationAxis,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutDir,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    msdcanet::parallel::init_from_env();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

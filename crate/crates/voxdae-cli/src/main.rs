//! `voxdae`: train, evaluate, and poke at volumetric denoising autoencoders.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/IO error, 3 numerical abort.
//! Every failure prints one machine-parseable line to stderr:
//! `voxdae-error: <code>: <message>`.

mod commands;
mod resolve;

use clap::error::ErrorKind;
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "voxdae",
    version,
    about = "Volumetric denoising autoencoder: training, denoising, completion, embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Flat `key = value` config file; command-line flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Root seed; every random stream in a run derives from it.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Float width for newly built models: 32 or 64. Commands that load a
    /// checkpoint follow the checkpoint's precision.
    #[arg(long, global = true, value_name = "32|64")]
    pub precision: Option<u8>,

    /// Worker-thread cap, reserved for parallel kernels; the current
    /// kernels are single-threaded so results stay bit-deterministic.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(clap::Subcommand, Debug)]
pub enum Command {
    /// Voxelize an OFF mesh into a binary occupancy grid.
    Voxelize {
        /// Input mesh (.off).
        input: PathBuf,
        /// Output grid path (.voxg).
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Write all 12 gravity-axis rotations as <out>.rotK.voxg.
        #[arg(long)]
        rotations: bool,
    },
    /// Generate a labeled synthetic shape dataset on disk.
    Synth {
        /// Output dataset root; one directory per class.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Training instances per class.
        #[arg(long, value_name = "N", default_value_t = 50)]
        count: usize,
        /// Test instances per class.
        #[arg(long, value_name = "N", default_value_t = 20)]
        test_count: usize,
    },
    /// Train a denoising autoencoder (or, with --p 0, the CAE baseline).
    Train {
        /// Dataset root directory, or `synthetic`.
        #[arg(long, value_name = "DIR|synthetic")]
        dataset: Option<String>,
        /// Checkpoint output path; epoch losses land at <out>.history.csv.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[arg(long, value_name = "N")]
        epochs: Option<usize>,
        #[arg(long, value_name = "X")]
        lr: Option<f64>,
        #[arg(long, value_name = "X")]
        momentum: Option<f64>,
        /// Input dropout rate (0 trains the CAE baseline).
        #[arg(long, value_name = "X")]
        p: Option<f64>,
        /// Loss: bce or mse.
        #[arg(long, value_name = "bce|mse")]
        loss: Option<String>,
        #[arg(long, value_name = "N")]
        batch_size: Option<usize>,
        /// Also write <out>.epochN.vcda every N epochs.
        #[arg(long, value_name = "N")]
        checkpoint_every: Option<usize>,
    },
    /// Reconstruct a corrupted test set and report per-class errors.
    Denoise {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR|synthetic")]
        dataset: Option<String>,
        /// Corruption: random:P, slice:PCT, or none. Default random:0.5.
        #[arg(long, value_name = "SPEC")]
        noise: Option<String>,
        #[arg(long, value_name = "X")]
        threshold: Option<f64>,
        /// Write the per-class CSV report here.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Shape completion: like denoise, but defaulting to slicing noise.
    Complete {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR|synthetic")]
        dataset: Option<String>,
        /// Corruption: slice:PCT presets 0.10/0.20/0.30. Default slice:0.30.
        #[arg(long, value_name = "SPEC")]
        noise: Option<String>,
        #[arg(long, value_name = "X")]
        threshold: Option<f64>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Walk the embedding space between two shapes and decode each station.
    Interpolate {
        /// Source shape (.voxg or .off).
        source: PathBuf,
        /// Target shape (.voxg or .off).
        target: PathBuf,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Number of stations, endpoints included.
        #[arg(long, value_name = "N")]
        steps: Option<usize>,
        #[arg(long, value_name = "X")]
        threshold: Option<f64>,
        /// Output directory for station grids and slice images.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Export bottleneck embeddings of a dataset as CSV.
    Embed {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR|synthetic")]
        dataset: Option<String>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Linear probe: train a one-vs-rest classifier on frozen embeddings.
    Probe {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR|synthetic")]
        dataset: Option<String>,
        #[arg(long, value_name = "N")]
        epochs: Option<usize>,
        #[arg(long, value_name = "X")]
        lr: Option<f64>,
    },
    /// Train the 6912-512-K classification head and report test accuracy.
    Finetune {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR|synthetic")]
        dataset: Option<String>,
        #[arg(long, value_name = "N")]
        epochs: Option<usize>,
        #[arg(long, value_name = "X")]
        lr: Option<f64>,
        #[arg(long, value_name = "X")]
        momentum: Option<f64>,
        /// head: train only the new layers; joint: also the encoder.
        #[arg(long, value_name = "head|joint")]
        mode: Option<String>,
    },
    /// Time eval-mode inference.
    Bench {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Number of timed forward passes.
        #[arg(long, value_name = "N", default_value_t = 100)]
        iters: usize,
    },
    /// Render a grid (or reconstruct one) as PGM slices and an OBJ mesh.
    Render {
        /// Input grid (.voxg).
        input: PathBuf,
        /// Output prefix: <prefix>_mid_*.pgm, <prefix>_montage.pgm,
        /// <prefix>.obj.
        #[arg(long, value_name = "PREFIX")]
        out: PathBuf,
    },
}

/// An error carrying its process exit code.
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            let _ = e.print();
            if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return ExitCode::SUCCESS;
            }
            eprintln!("voxdae-error: 1: invalid usage");
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("voxdae-error: {}: {}", e.code, e.message);
            ExitCode::from(e.code)
        }
    }
}

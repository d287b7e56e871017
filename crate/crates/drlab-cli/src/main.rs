//! Batch front-end: configuration-driven pipelines with machine-readable
//! CSV/JSON outputs and a manifest per run.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "drlab", version, about = "Dual-rail cluster-state simulation toolkit")]
struct Cli {
    /// TOML config file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Master seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
    /// Device preset name.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Device parameter file (TOML or JSON); overrides the preset.
    #[arg(long, global = true)]
    device: Option<std::path::PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ideal and calibrated-channel states plus the fidelity scaling table.
    Generate {
        /// Largest chain length in the fidelity table.
        #[arg(long)]
        n_max: Option<usize>,
        /// Use the ideal channel instead of the calibrated one.
        #[arg(long)]
        ideal: bool,
        /// Explicit noise parameters "loss_w1,loss_w2,dephase" instead of
        /// the fit.
        #[arg(long)]
        noise: Option<String>,
    },
    /// Synthetic-shot tomography: moments, MLE state, and the MPO
    /// cross-check.
    Tomo {
        /// Number of logical qubits in the sampled chain state.
        #[arg(long)]
        n_logical: Option<usize>,
        /// Shots to synthesize.
        #[arg(long)]
        shots: Option<usize>,
        /// Load shots from this stem instead of synthesizing.
        #[arg(long)]
        shot_file: Option<std::path::PathBuf>,
        /// Skip the MPO cross-validation.
        #[arg(long)]
        no_mpo: bool,
    },
    /// Localizable-entanglement matrices, distance curves, and threshold
    /// lengths.
    Le {
        /// Threshold on the LE value.
        #[arg(long)]
        threshold: Option<f64>,
        /// Chain length for the pairwise LE matrix.
        #[arg(long)]
        n_logical: Option<usize>,
    },
    /// Dual-rail versus single-rail fidelity and LE comparison.
    Compare {
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Device-level outputs: Stark curves, spectra, coherence limit.
    Device {
        /// Number of drive-amplitude samples per Stark curve.
        #[arg(long)]
        stark_points: Option<usize>,
        /// Decoherence draws for the coherence limit.
        #[arg(long)]
        draws: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("DRLAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let run = config::RunConfig::resolve(
        cli.config.as_deref(),
        cli.seed,
        cli.out.as_deref(),
        cli.preset.as_deref(),
        cli.device.as_deref(),
    );
    let result = run.and_then(|cfg| match cli.command {
        Command::Generate { n_max, ideal, noise } => {
            commands::generate::run(&cfg, n_max, ideal, noise.as_deref())
        }
        Command::Tomo { n_logical, shots, shot_file, no_mpo } => {
            commands::tomo::run(&cfg, n_logical, shots, shot_file.as_deref(), no_mpo)
        }
        Command::Le { threshold, n_logical } => {
            commands::le::run(&cfg, threshold, n_logical)
        }
        Command::Compare { n_max, threshold } => {
            commands::compare::run(&cfg, n_max, threshold)
        }
        Command::Device { stark_points, draws } => {
            commands::device::run(&cfg, stark_points, draws)
        }
    });
    match result {
        Ok(()) => {}
        Err(err) => {
            let report = serde_json::json!({ "error": err.to_string() });
            eprintln!("{report}");
            std::process::exit(1);
        }
    }
}

//! Command-line front end: dataset generation, surrogate training,
//! prediction, evaluation and cluster inspection.
//!
//! Exit codes: 0 success, 1 input or IO error, 2 finished with warnings
//! (the cluster-count search exhausted its budget; the model is still
//! written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(
    name = "grassgp",
    version,
    about = "Clustered Gaussian-process surrogates on the Grassmann manifold"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SubclusterArg {
    Auto,
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Kraichnan-Orszag Monte Carlo dataset.
    GenerateKo {
        #[arg(long, default_value_t = 1024)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Snapshot shape as NFxMF, e.g. 100x100; defaults to the
        /// closest-to-square factorization of the step count.
        #[arg(long)]
        shape: Option<String>,
        #[arg(long, default_value_t = 30.0)]
        t_final: f64,
        #[arg(long, default_value_t = 0.003)]
        dt: f64,
    },
    /// Train a surrogate on a dataset directory.
    Train {
        /// Dataset directory produced by generate-ko or laid out the same way.
        #[arg(long)]
        data: PathBuf,
        /// Output model bundle path; a diagnostics CSV is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        n_start: usize,
        /// Maximum cluster count; defaults to n_samples / n_min_points.
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = 10)]
        n_min_points: usize,
        /// Per-cluster mean projection-error threshold.
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        /// Fraction of clusters that must pass the threshold.
        #[arg(long, default_value_t = 0.95)]
        pass_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SubclusterArg::Auto)]
        subcluster: SubclusterArg,
    },
    /// Predict snapshots at new parameter points.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV of parameter points (header: sample_id,xi_1,...).
        #[arg(long)]
        params: PathBuf,
        /// Output directory for predicted snapshots.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model against a test dataset directory.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output report CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export per-sample cluster membership as a plot-ready table.
    InspectClusters {
        #[arg(long)]
        model: PathBuf,
        /// Output clusters CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenerateKo {
            n_samples,
            seed,
            out,
            shape,
            t_final,
            dt,
        } => commands::generate_ko(n_samples, seed, &out, shape.as_deref(), t_final, dt),
        Command::Train {
            data,
            out,
            n_start,
            n_max,
            n_min_points,
            threshold,
            pass_fraction,
            seed,
            subcluster,
        } => commands::train(
            &data,
            &out,
            n_start,
            n_max,
            n_min_points,
            threshold,
            pass_fraction,
            seed,
            subcluster,
        ),
        Command::Predict { model, params, out } => commands::predict(&model, &params, &out),
        Command::Evaluate { model, data, out } => commands::evaluate(&model, &data, &out),
        Command::InspectClusters { model, out } => commands::inspect_clusters(&model, &out),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

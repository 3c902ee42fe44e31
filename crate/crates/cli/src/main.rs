//! `refrec`: train, evaluate, and numerically verify the reflective
//! autoencoder recommender. Every subcommand takes the same flags, writes
//! its artifacts into `--out`, and echoes the fully resolved configuration
//! there as `config.resolved`.
//!
//! Exit codes: 0 success, 1 usage, 2 data or model error, 3 non-finite
//! training loss, 4 verification failure.

mod commands;
mod config;
mod pipeline;

use clap::Parser;

use refrec::training::TrainError;

use crate::commands::VerifyFailed;
use crate::config::{CommonArgs, UsageError};

#[derive(Parser)]
#[command(name = "refrec", version, about = "Reflective autoencoder recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Fit a model and save it with its training curves
    Train(CommonArgs),
    /// Score a saved model on the test split
    Evaluate(CommonArgs),
    /// Compare reflection, plain, and neighbor-imputed arms on one split
    Ablate(CommonArgs),
    /// Sweep every decay family over the alpha grid
    DecayStudy(CommonArgs),
    /// Refit and score inside each sparsity quintile
    SparsityStudy(CommonArgs),
    /// Compare item-based and user-based models
    OrientationStudy(CommonArgs),
    /// Validation search over regularization weights and alpha
    Grid(CommonArgs),
    /// Run the randomized numerical audit
    Verify(CommonArgs),
    /// Dump latent activations from a saved model
    ExportLatent(CommonArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => commands::train(&config::resolve(&a)?),
        Command::Evaluate(a) => commands::evaluate(&config::resolve(&a)?),
        Command::Ablate(a) => commands::ablate(&config::resolve(&a)?),
        Command::DecayStudy(a) => commands::decay_study(&config::resolve(&a)?),
        Command::SparsityStudy(a) => commands::sparsity_study(&config::resolve(&a)?),
        Command::OrientationStudy(a) => commands::orientation_study(&config::resolve(&a)?),
        Command::Grid(a) => commands::grid(&config::resolve(&a)?),
        Command::Verify(a) => commands::verify(&config::resolve(&a)?),
        Command::ExportLatent(a) => {
            let vectors = a
                .vectors
                .as_deref()
                .map(config::parse_index_list)
                .transpose()?;
            commands::export_latent(&config::resolve(&a)?, vectors)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(TrainError::NonFinite { .. }) = cause.downcast_ref::<TrainError>() {
            return 3;
        }
        if cause.downcast_ref::<VerifyFailed>().is_some() {
            return 4;
        }
    }
    2
}

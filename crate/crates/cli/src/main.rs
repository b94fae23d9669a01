mod generate;
mod train;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "varnet", version, about = "Train variation networks and generate controlled variations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a TOML experiment file.
    Train(train::TrainArgs),
    /// Train one run per (beta, gamma) pair and print a summary table.
    Sweep(train::SweepArgs),
    /// Summarize metrics files or run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Render images from a checkpoint.
    Generate(generate::GenerateArgs),
    /// Serve a checkpoint over HTTP.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Test examples exposed through `/dataset-sample`.
        #[arg(long, default_value_t = 2000)]
        eval: usize,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train(args) => train::train(&args).map(|_| ()),
        Command::Sweep(args) => train::sweep(&args),
        Command::Report { runs } => train::report(&runs),
        Command::Generate(args) => generate::run(&args),
        Command::Serve { ckpt, addr, eval } => {
            let snapshot = varnet_service::Snapshot::load(&ckpt, eval)
                .with_context(|| format!("loading {}", ckpt.display()))?;
            log::info!("serving {} (step {}) on {addr}", ckpt.display(), snapshot.step);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(varnet_service::serve(Arc::new(snapshot), addr))?;
            Ok(())
        }
    }
}

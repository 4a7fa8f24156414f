use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wvn_cli::config::{Mode, Overrides, RunConfig};
use wvn_cli::{cmd_bands, cmd_synthesize, cmd_verify, exit_code_for, EXIT_CONTRACT, EXIT_PASS};

#[derive(Parser)]
#[command(name = "wvn", version, about = "Embedded eigenvalues for perturbed periodic operators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Scaling policy override, repeatable.
    #[arg(long = "policy", global = true, value_name = "KEY=VAL")]
    policy: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Band edges and quasimomentum samples.
    Bands,
    /// Build the perturbation and write potential, trajectories and report.
    Synthesize,
    /// Run the configured experiment and write its report.
    Verify,
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        out: cli.out.clone(),
        mode: cli.mode,
        epochs: cli.epochs,
        policy: cli.policy.clone(),
    })?;
    match cli.cmd {
        Cmd::Bands => cmd_bands(&cfg),
        Cmd::Synthesize => cmd_synthesize(&cfg),
        Cmd::Verify => cmd_verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::from(EXIT_PASS),
        Ok(false) => ExitCode::from(EXIT_CONTRACT),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

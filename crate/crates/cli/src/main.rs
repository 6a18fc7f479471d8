// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pidsteer_cli::commands;
use pidsteer_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "pidsteer", version, about = "PID steering of contrastive activation plants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every gain block and write traces plus summary.json.
    Simulate(Common),
    /// Evaluate a gain grid and write sweep.csv.
    Sweep(Common),
    /// Check the stability certificates; exit 4 when one fails.
    Certify(Common),
    /// Detect overshoots and compare PI against PID.
    OvershootReport(Common),
    /// Write the ⟨ē(0), ē(k)⟩ series for every gain block.
    Figure(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration (built-in defaults when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the plant seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of layers.
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if self.seed.is_some() {
            cfg.run.seed = self.seed;
        }
        if self.steps.is_some() {
            cfg.run.steps = self.steps;
        }
        cfg.validate()?;
        commands::thread_pool()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            commands::simulate(&cfg, &commands::output_dir(c.out, &cfg))
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            commands::sweep(&cfg, &commands::output_dir(c.out, &cfg))
        }
        Command::Certify(c) => {
            let cfg = c.load()?;
            let out = c.out.or_else(|| cfg.run.out.clone());
            let (code, text) = commands::certify(&cfg, out.as_deref())?;
            print!("{text}");
            Ok(code)
        }
        Command::OvershootReport(c) => {
            let cfg = c.load()?;
            let (code, text) = commands::overshoot_report(&cfg, &commands::output_dir(c.out, &cfg))?;
            print!("{text}");
            Ok(code)
        }
        Command::Figure(c) => {
            let cfg = c.load()?;
            commands::figure(&cfg, &commands::output_dir(c.out, &cfg))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("pidsteer: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

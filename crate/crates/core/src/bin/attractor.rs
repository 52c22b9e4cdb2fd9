use std::path::PathBuf;
use std::process::ExitCode;

use attractor_sos::cli::{self, CliError, Overrides, RunConfig, CERTIFICATE_FILE};
use clap::{Args, Parser, Subcommand};

/// Outer approximations of global attractors from sum-of-squares certificates.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration, verify it and write all artifacts.
    Run(Common),
    /// Solve every degree / beta combination of a configuration.
    Sweep(Common),
    /// Re-check an existing certificate against a configuration.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Certificate file; defaults to certificate.json in the output directory.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration (see docs/config.md).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output` or `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every sampled check.
    #[arg(long)]
    seed: Option<u64>,
    /// Factor R in K = {J <= R * epsilon}.
    #[arg(long)]
    epsilon_scale: Option<f64>,
    /// Polynomial degree k, replacing the config's degree or degree list.
    #[arg(long)]
    degree: Option<u32>,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf), CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides { seed: self.seed, epsilon_scale: self.epsilon_scale, degree: self.degree })?;
        let out = self.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn execute(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Run(c) => {
            let (cfg, out) = c.load()?;
            let outcome = cli::run(&cfg, &out)?;
            print!("{}", outcome.summary.to_text());
            print!("{}", outcome.report.to_text());
            println!("artifacts in {}", out.display());
            Ok(outcome.success())
        }
        Command::Sweep(c) => {
            let (cfg, out) = c.load()?;
            let outcome = cli::sweep(&cfg, &out)?;
            print!("{}", outcome.to_csv());
            if let Some(i) = &outcome.intersection {
                println!(
                    "intersection of {} certificates: {} grid points, volume {:.6} ± {:.6}",
                    i.members, i.grid_in_k, i.volume.volume, i.volume.stderr
                );
            }
            Ok(outcome.success())
        }
        Command::Verify { common, certificate } => {
            let (cfg, out) = common.load()?;
            let cert = certificate.unwrap_or_else(|| out.join(CERTIFICATE_FILE));
            let report = cli::verify(&cfg, &cert, &out)?;
            print!("{}", report.to_text());
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use crsched::config::PolicyKind;
use crsched_cli::{configure_workers, preset, run_experiment, verify};

#[derive(Parser)]
#[command(
    name = "crsched",
    about = "Slot-level scheduling simulator for an interference-capped uplink"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (config file or preset) and write CSV tables.
    Simulate {
        /// Experiment config (TOML). Optional when --preset is given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the CSV files.
        #[arg(long)]
        out: PathBuf,
        /// Built-in experiment: fig3 (per-SU delay vs load under two
        /// delay bounds) or fig4 (policy comparison).
        #[arg(long)]
        preset: Option<String>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the policy (doic | csma | cnc | static-priority).
        #[arg(long)]
        policy: Option<String>,
        /// Override the slot horizon (useful for quick preset runs).
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Run the oracle verification suite against a config.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Smaller sample counts and horizons.
        #[arg(long)]
        quick: bool,
    },
    /// Print closed-form service moments against Monte Carlo estimates.
    Moments {
        #[arg(long)]
        config: PathBuf,
        /// Monte Carlo packets per SU.
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
}

fn apply_overrides(
    exp: &mut crsched_cli::Experiment,
    seed: Option<u64>,
    policy: Option<&str>,
    horizon: Option<u64>,
) -> Result<()> {
    if let Some(seed) = seed {
        exp.base.seed = seed;
    }
    if let Some(name) = policy {
        exp.base.policy = PolicyKind::parse(name)
            .ok_or_else(|| anyhow::anyhow!("unknown policy `{name}`"))?;
    }
    if let Some(h) = horizon {
        exp.base.horizon_slots = h;
    }
    Ok(())
}

fn run() -> Result<bool> {
    configure_workers();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            config,
            out,
            preset: preset_name,
            seed,
            policy,
            horizon,
        } => {
            let experiments: Vec<(String, crsched_cli::Experiment)> = match (&preset_name, &config)
            {
                (Some(name), _) => preset(name)?,
                (None, Some(path)) => {
                    let stem = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "experiment".into());
                    vec![(stem, crsched_cli::load(path)?)]
                }
                (None, None) => bail!("give --config or --preset"),
            };
            for (label, mut exp) in experiments {
                apply_overrides(&mut exp, seed, policy.as_deref(), horizon)?;
                let output = run_experiment(&exp, &out, &label)?;
                println!(
                    "{label}: {} runs -> {} and {}",
                    output.outcomes.len(),
                    output.runs_path.display(),
                    output.summary_path.display()
                );
            }
            Ok(true)
        }
        Command::Verify { config, quick } => {
            let exp = crsched_cli::load(&config)?;
            let checks = verify(&exp, quick);
            print!("{}", crsched_cli::render_checks(&checks));
            Ok(checks.iter().all(|c| c.pass))
        }
        Command::Moments { config, samples } => {
            let exp = crsched_cli::load(&config)?;
            print!("{}", crsched_cli::verify::moments_table(&exp, samples)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

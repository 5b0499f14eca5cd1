use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use solilab::config::Config;
use solilab::experiment::{self, preset_config, ExperimentPreset, PRESETS};
use solilab::Result;

#[derive(Parser)]
#[command(name = "solilab", version, about = "Soliton dynamics of a charged particle in a scalar wave field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file with `key = value` lines under `[section]` headers.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed of the random perturbations.
    #[arg(long)]
    seed: Option<u64>,
    /// Start from a built-in preset instead of the defaults.
    #[arg(long)]
    preset: Option<String>,
    /// Override a single setting, e.g. `--set charge.width=2`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the charge density and check admissibility.
    CheckRho(Common),
    /// Evaluate the soliton at the configured parameters.
    Soliton(Common),
    /// Scan the resolvent data along the imaginary axis.
    Spectrum(Common),
    /// Run the nonlinear system.
    Simulate(Common),
    /// Run the linearised flow around a soliton.
    Linearize(Common),
    /// Re-analyse the stored states of a simulate run.
    Analyze {
        /// Run directory written by `simulate` with `run.store_states = true`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
        /// Output directory, defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named preset end to end.
    RunPreset {
        /// One of soliton-persistence, perturbed-soliton, spectrum-scan.
        #[arg(long)]
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

fn build_config(common: &Common, preset: Option<&str>) -> Result<ExperimentPreset> {
    let mut cfg = match preset.or(common.preset.as_deref()) {
        Some(name) => preset_config(name)?,
        None => Config::default(),
    };
    if let Some(path) = &common.config {
        cfg.merge(&Config::from_file(path)?);
    }
    for o in &common.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| solilab::Error::Config(format!("--set {o}: expected SECTION.KEY=VALUE")))?;
        let (section, key) = key.rsplit_once('.').unwrap_or(("", key));
        cfg.set(section.trim(), key.trim(), value.trim());
    }
    if let Some(seed) = common.seed {
        cfg.set("", "seed", seed);
    }
    ExperimentPreset::from_config(&cfg)
}

fn report<T: Serialize>(r: Result<T>) -> ExitCode {
    match r {
        Ok(s) => {
            match serde_json::to_string_pretty(&s) {
                Ok(text) => println!("{text}"),
                Err(e) => eprintln!("cannot format summary: {e}"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error ({}): {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::CheckRho(c) => report(build_config(&c, None).and_then(|p| experiment::check_rho(&p, &c.out))),
        Command::Soliton(c) => report(build_config(&c, None).and_then(|p| experiment::soliton_report(&p, &c.out))),
        Command::Spectrum(c) => report(build_config(&c, None).and_then(|p| experiment::spectrum_scan(&p, &c.out))),
        Command::Simulate(c) => report(build_config(&c, None).and_then(|p| experiment::simulate(&p, &c.out))),
        Command::Linearize(c) => report(build_config(&c, None).and_then(|p| experiment::linearize(&p, &c.out))),
        Command::Analyze { input, delta, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            report(experiment::analyze(&input, delta, &out))
        }
        Command::RunPreset { name, common } => {
            if !PRESETS.contains(&name.as_str()) {
                eprintln!("unknown preset `{name}`; known: {}", PRESETS.join(", "));
                return ExitCode::FAILURE;
            }
            report(build_config(&common, Some(&name)).and_then(|p| experiment::run_preset(&p, &common.out)))
        }
    }
}

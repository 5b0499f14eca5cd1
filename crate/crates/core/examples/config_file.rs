//! Loads a configuration file, applies it over the defaults and runs the
//! matching pipeline, as the command-line tool does.
//!
//! `cargo run --release --example config_file -- path/to/config.txt [out_dir]`

use std::path::PathBuf;

use solilab::config::Config;
use solilab::experiment::{self, ExperimentPreset};

fn main() -> solilab::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => Config::from_file(&PathBuf::from(path))?,
        None => Config::parse("[run]\nt_end = 2\n")?,
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/config_file".into()));
    let preset = ExperimentPreset::from_config(&cfg)?;
    let summary = experiment::run_preset(&preset, &out)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

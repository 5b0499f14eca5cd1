//! Perturbed-soliton preset end to end: simulation, projection track,
//! scattering state and decay fits, written to a run directory.
//!
//! `cargo run --release --example perturbed_soliton -- [out_dir] [t_end]`
//!
//! The full run takes a couple of minutes; pass a shorter `t_end` for a preview.

use std::path::PathBuf;

use solilab::experiment::{self, preset_config, ExperimentPreset, PresetOutcome};

fn main() -> solilab::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/perturbed".into()));
    let mut cfg = preset_config("perturbed-soliton")?;
    if let Some(t_end) = args.next() {
        cfg.set("run", "t_end", t_end);
    }
    let preset = ExperimentPreset::from_config(&cfg)?;
    let PresetOutcome::Run(run) = experiment::run_preset(&preset, &out)? else {
        unreachable!("perturbed-soliton is a simulation preset");
    };
    println!("wrote {}", out.display());
    println!("energy drift {:.2e}, final qdot {:?}", run.energy_drift, run.final_qdot.as_slice());
    if let Some(d) = run.decay {
        println!("{}", serde_json::to_string_pretty(&d)?);
        println!("checks pass at exponent -0.8: {}", d.passes(-0.8));
    }
    Ok(())
}

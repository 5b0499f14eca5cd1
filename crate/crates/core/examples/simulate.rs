//! Nonlinear run of a traveling soliton: the particle should move with constant
//! velocity and the energy should stay fixed.
//!
//! `cargo run --release --example simulate`

use nalgebra::Vector3;
use solilab::charge::make_admissible_density;
use solilab::dynamics::{run_nonlinear_with, SimConfig};
use solilab::grid::Grid3;
use solilab::soliton::{soliton, SolitonParams};

fn main() -> solilab::Result<()> {
    let grid = Grid3::new(64, 16.0)?;
    let rho = make_admissible_density(&grid, 1.0, 0.01)?;
    let sigma = SolitonParams::new(Vector3::zeros(), Vector3::new(0.3, 0.0, 0.0))?;
    let y0 = soliton(&rho, &sigma)?;
    let cfg = SimConfig { check_horizon: false, snapshot_every: 16, ..SimConfig::for_grid(&grid, 10.0) };
    println!("{:>6} {:>12} {:>12}", "t", "q_1", "|q - vt|");
    let (_, traj) = run_nonlinear_with(&y0, &rho, &cfg, |_, t, y| {
        println!("{t:>6.2} {:>12.6} {:>12.3e}", y.q[0], (y.q - sigma.v * t).norm());
        Ok(())
    })?;
    println!("relative energy drift {:.2e}", traj.energy_drift());
    Ok(())
}

//! Traveling solitons at a few speeds: residuals, energy and momentum.
//!
//! `cargo run --release --example soliton`

use nalgebra::Vector3;
use solilab::charge::make_admissible_density;
use solilab::dynamics::hamiltonian;
use solilab::grid::Grid3;
use solilab::soliton::{soliton, soliton_residuals, SolitonParams};

fn main() -> solilab::Result<()> {
    let grid = Grid3::new(64, 16.0)?;
    let rho = make_admissible_density(&grid, 1.0, 0.01)?;
    println!("{:>6} {:>12} {:>12} {:>12} {:>14} {:>10}", "speed", "elliptic", "transport", "force", "energy", "p_1");
    for s in [0.0, 0.3, 0.6, 0.9] {
        let sigma = SolitonParams::new(Vector3::new(0.5, 0.0, 0.0), Vector3::new(s, 0.0, 0.0))?;
        let y = soliton(&rho, &sigma)?;
        let r = soliton_residuals(&rho, &sigma, &y);
        println!(
            "{s:>6.2} {:>12.2e} {:>12.2e} {:>12.2e} {:>14.10} {:>10.6}",
            r.elliptic,
            r.transport,
            r.force,
            hamiltonian(&y, &rho),
            y.p[0]
        );
    }
    Ok(())
}

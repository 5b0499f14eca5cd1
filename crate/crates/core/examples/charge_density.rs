//! Builds the admissible charge `ρ = Δ³ρ₂` and runs the Wiener and moment checks.
//!
//! `cargo run --release --example charge_density`

use solilab::charge::{make_admissible_density, MOMENT_TOL, WIENER_FLOOR};
use solilab::grid::Grid3;

fn main() -> solilab::Result<()> {
    let grid = Grid3::new(64, 16.0)?;
    let rho = make_admissible_density(&grid, 1.0, 0.01)?;
    let w = rho.check_wiener(WIENER_FLOOR);
    let m = rho.check_moments(MOMENT_TOL);
    println!("effective radius  {:.3}", rho.effective_radius());
    println!("L1 norm           {:.6e}", rho.l1_norm());
    println!("Wiener            {} (min ratio {:.3e} at k = {:?})", w.pass, w.min_ratio, w.worst_k);
    println!("moments |a| <= 4  {} (max relative {:.2e})", m.pass, m.max_relative);
    for k in [0.0, 0.5, 1.0, 2.0, 4.0] {
        println!("  rho_hat({k:.1}) = {:.6e}", rho.hat(k));
    }
    Ok(())
}

//! Symplectic form on the soliton frame and the nonlinear projection onto the
//! solitary manifold.
//!
//! `cargo run --release --example symplectic_projection`

use nalgebra::Vector3;
use solilab::charge::make_admissible_density;
use solilab::grid::Grid3;
use solilab::soliton::{soliton, FieldPair, SolitonParams};
use solilab::symplectic::{check_nondegenerate, omega_matrix, project_nonlinear, ProjectionOptions};

fn main() -> solilab::Result<()> {
    let grid = Grid3::new(64, 16.0)?;
    let rho = make_admissible_density(&grid, 1.0, 0.01)?;
    let sigma = SolitonParams::new(Vector3::new(0.2, -0.1, 0.0), Vector3::new(0.3, 0.05, 0.0))?;
    let om = omega_matrix(&rho, &sigma.v);
    println!("Omega(v) =\n{om:.6}");
    println!("det Omega(v) = {:.6e}", check_nondegenerate(&om)?);

    // a soliton plus a small bump, projected from a rough guess
    let mut y = soliton(&rho, &sigma)?;
    let bump = grid.sample(|x| 1e-3 * (-(x - Vector3::new(1.0, 0.5, 0.0)).norm_squared()).exp());
    y.fields.axpy(1.0, &FieldPair::from_real(&grid, &bump, &vec![0.0; grid.len()]));
    let guess = SolitonParams::new(Vector3::zeros(), Vector3::new(0.25, 0.0, 0.0))?;
    let p = project_nonlinear(&rho, &y, &guess, &ProjectionOptions::default())?;
    println!("projection after {} Newton steps, residual {:.2e}", p.iterations, p.residual);
    println!("  b = {:?}", p.sigma.b.as_slice());
    println!("  v = {:?}", p.sigma.v.as_slice());
    println!("  |Z| = {:.3e}", p.z.norm(&grid));
    Ok(())
}

//! Linearised flow around a soliton: frame vectors in the kernel stay fixed,
//! velocity modes grow linearly, and the quadratic energy is conserved.
//!
//! `cargo run --release --example linearize`

use nalgebra::Vector3;
use solilab::charge::make_admissible_density;
use solilab::dynamics::{linear_energy, run_linearized_with, SimConfig};
use solilab::grid::Grid3;
use solilab::soliton::{tangent_frame, FieldPair, PhaseState, SolitonParams};
use solilab::symplectic::project_linear;

fn main() -> solilab::Result<()> {
    let grid = Grid3::new(64, 16.0)?;
    let rho = make_admissible_density(&grid, 1.0, 0.01)?;
    let v = Vector3::new(0.3, 0.0, 0.0);
    let sigma = SolitonParams::new(Vector3::zeros(), v)?;
    let fr = tangent_frame(&rho, &sigma)?;
    let cfg = SimConfig { check_horizon: false, ..SimConfig::for_grid(&grid, 5.0) };

    let x = run_linearized_with(&fr.vectors[3], &rho, &v, &v, &cfg, |_, _, _| Ok(()))?;
    let mut expect = fr.vectors[3].clone();
    expect.axpy(cfg.t_end, &fr.vectors[0]);
    println!("secular mode error at t = {}: {:.2e}", cfg.t_end, x.difference(&expect).norm(&grid) / expect.norm(&grid));

    let mut z = PhaseState::zeros(&grid);
    let bump = grid.sample(|y| (-(y - Vector3::new(1.0, 0.0, 0.0)).norm_squared()).exp());
    z.fields = FieldPair::from_real(&grid, &bump, &vec![0.0; grid.len()]);
    z.p = Vector3::new(0.1, 0.0, 0.0);
    let (x0, _) = project_linear(&rho, &sigma, &z)?;
    let h0 = linear_energy(&x0, &rho, &v, &v);
    run_linearized_with(&x0, &rho, &v, &v, &cfg, |step, t, x| {
        if step % 16 == 0 {
            println!("t = {t:>5.2}  H = {:.12e}  |x| = {:.4e}", linear_energy(x, &rho, &v, &v), x.norm(&grid));
        }
        Ok(())
    })?;
    println!("initial H = {h0:.12e}");
    Ok(())
}
